//! Hard-decision detectors for `y = Hx + v`.
//!
//! [`ml_detect`] returns the exact maximum-likelihood decision through a depth-first
//! sphere search on the QR factor of `H`; [`ml_detect_exhaustive`] walks every hypothesis
//! and serves as its reference. Both break metric ties towards the lexicographically
//! smallest bit pattern.

use nalgebra::linalg::Cholesky;
use num_complex::Complex64;

use crate::error::{check_cap, OtfsError, Result};
use crate::grid::Alphabet;
use crate::{CMatrix, CVector};

/// Default limit on the number of hypotheses `|A|^len` an ML search may face.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 20;

/// Steps between exact residual recomputations in the exhaustive search.
const RESIDUAL_REFRESH: u64 = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Alphabet index (equivalently bit label) per symbol.
    pub indices: Vec<usize>,
    pub symbols: CVector,
    pub bits: Vec<u8>,
    /// `||y - H x||^2` of the decision; ML only.
    pub metric: Option<f64>,
    /// Set when MMSE had to fall back to a pseudo-inverse.
    pub pseudo_inverse: bool,
}

impl DetectionResult {
    fn new(
        indices: Vec<usize>,
        alphabet: &Alphabet,
        metric: Option<f64>,
        pseudo_inverse: bool,
    ) -> Self {
        DetectionResult {
            symbols: alphabet.modulate(&indices),
            bits: alphabet.bits_from_indices(&indices),
            indices,
            metric,
            pseudo_inverse,
        }
    }
}

fn check_dims(y: &CVector, h: &CMatrix) -> Result<()> {
    if y.len() != h.nrows() {
        return Err(OtfsError::LengthMismatch {
            expected: h.nrows(),
            got: y.len(),
        });
    }
    Ok(())
}

fn tie_tolerance(best: f64) -> f64 {
    1e-9 * (1.0 + best)
}

/// Whether a candidate with `metric` and `indices` should replace the incumbent.
fn improves(metric: f64, indices: &[usize], best: f64, best_indices: &[usize]) -> bool {
    let tol = tie_tolerance(best);
    if metric < best - tol {
        return true;
    }
    metric <= best + tol && indices < best_indices
}

/// Exact ML detection `argmin_x ||y - Hx||^2` over `A^len`.
pub fn ml_detect(
    y: &CVector,
    h: &CMatrix,
    alphabet: &Alphabet,
    cap: u64,
) -> Result<DetectionResult> {
    check_dims(y, h)?;
    let len = h.ncols();
    check_cap("ML detection", alphabet.len(), len, cap)?;
    if len == 0 || h.nrows() < len {
        return ml_detect_exhaustive(y, h, alphabet, cap);
    }
    // Triangularizing [H | y] gives R and Q^H y in one pass.
    let mut r = CMatrix::zeros(h.nrows(), len + 1);
    r.columns_mut(0, len).copy_from(h);
    r.column_mut(len).copy_from(y);
    householder_triangularize(&mut r, len);
    let z: Vec<Complex64> = (0..len).map(|i| r[(i, len)]).collect();
    let points = alphabet.points();
    let q = points.len();

    // Search from the last coordinate down to the first; partial[i] is the cost of
    // coordinates i..len given the choices there.
    let mut best = f64::INFINITY;
    let mut best_indices = vec![usize::MAX; len];
    let mut choice = vec![0usize; len];
    let mut partial = vec![0.0f64; len + 1];
    let mut candidates: Vec<Vec<(f64, usize)>> = vec![Vec::with_capacity(q); len];
    let mut cursor = vec![0usize; len];

    let expand = |level: usize, choice: &[usize], candidates: &mut Vec<Vec<(f64, usize)>>| {
        let mut acc = z[level];
        for j in level + 1..len {
            acc -= r[(level, j)] * points[choice[j]];
        }
        let rii = r[(level, level)];
        let list = &mut candidates[level];
        list.clear();
        for (idx, &a) in points.iter().enumerate() {
            list.push(((acc - rii * a).norm_sqr(), idx));
        }
        list.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    };

    let mut level = len - 1;
    expand(level, &choice, &mut candidates);
    cursor[level] = 0;
    loop {
        if cursor[level] < q {
            let (cost, idx) = candidates[level][cursor[level]];
            cursor[level] += 1;
            let total = partial[level + 1] + cost;
            if total > best + tie_tolerance(best) {
                // Candidates are sorted; the rest of this level is worse.
                cursor[level] = q;
                continue;
            }
            choice[level] = idx;
            if level == 0 {
                if improves(total, &choice, best, &best_indices) {
                    best = total;
                    best_indices.copy_from_slice(&choice);
                }
                continue;
            }
            partial[level] = total;
            level -= 1;
            expand(level, &choice, &mut candidates);
            cursor[level] = 0;
        } else {
            level += 1;
            if level == len {
                break;
            }
        }
    }
    let x = alphabet.modulate(&best_indices);
    let metric = (y - h * x).norm_squared();
    Ok(DetectionResult::new(
        best_indices,
        alphabet,
        Some(metric),
        false,
    ))
}

/// Apply Householder reflections to `a` in place so that its first `pivots` columns become
/// upper triangular. Later columns receive the same reflections.
fn householder_triangularize(a: &mut CMatrix, pivots: usize) {
    let (rows, cols) = a.shape();
    let data = a.as_mut_slice();
    let mut v = vec![Complex64::new(0.0, 0.0); rows];
    for j in 0..pivots.min(rows) {
        let col = &data[j + rows * j..rows * (j + 1)];
        let norm = col.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = col[0];
        let alpha = if x0.norm() == 0.0 {
            Complex64::new(-norm, 0.0)
        } else {
            -x0 / x0.norm() * norm
        };
        let v = &mut v[..rows - j];
        v.copy_from_slice(col);
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for k in j + 1..cols {
            let target = &mut data[j + rows * k..rows * (k + 1)];
            let dot: Complex64 = v
                .iter()
                .zip(target.iter())
                .map(|(vi, t)| vi.conj() * t)
                .sum();
            let f = dot * (2.0 / vnorm2);
            for (t, vi) in target.iter_mut().zip(v.iter()) {
                *t -= f * vi;
            }
        }
        data[j + rows * j] = alpha;
        for x in &mut data[j + 1 + rows * j..rows * (j + 1)] {
            *x = Complex64::new(0.0, 0.0);
        }
    }
}

/// Reference ML detector visiting all `|A|^len` hypotheses in lexicographic order with an
/// incrementally updated residual.
pub fn ml_detect_exhaustive(
    y: &CVector,
    h: &CMatrix,
    alphabet: &Alphabet,
    cap: u64,
) -> Result<DetectionResult> {
    check_dims(y, h)?;
    let len = h.ncols();
    let total = check_cap("ML detection", alphabet.len(), len, cap)?;
    let points = alphabet.points();
    let q = points.len();
    let mut idx = vec![0usize; len];
    let fresh = |idx: &[usize]| y - h * alphabet.modulate(idx);
    let mut residual = fresh(&idx);
    let mut best = residual.norm_squared();
    let mut best_indices = idx.clone();
    for step in 1..total {
        // Odometer increment with the last coordinate fastest.
        let mut pos = len;
        loop {
            pos -= 1;
            let old = points[idx[pos]];
            idx[pos] = (idx[pos] + 1) % q;
            let delta = points[idx[pos]] - old;
            residual.axpy(-delta, &h.column(pos), Complex64::new(1.0, 0.0));
            if idx[pos] != 0 {
                break;
            }
        }
        if step as u64 % RESIDUAL_REFRESH == 0 {
            residual = fresh(&idx);
        }
        let metric = residual.norm_squared();
        if improves(metric, &idx, best, &best_indices) {
            best = metric;
            best_indices.copy_from_slice(&idx);
        }
    }
    let metric = fresh(&best_indices).norm_squared();
    Ok(DetectionResult::new(
        best_indices,
        alphabet,
        Some(metric),
        false,
    ))
}

/// Linear MMSE estimate `H^H (H H^H + n0 I)^{-1} y`.
///
/// When `n0 == 0` or the normal matrix is not positive definite the pseudo-inverse of `H`
/// is used instead and the returned flag is set.
pub fn mmse_estimate(y: &CVector, h: &CMatrix, n0: f64) -> Result<(CVector, bool)> {
    check_dims(y, h)?;
    if n0 > 0.0 {
        let rows = h.nrows();
        let gram = h * h.adjoint() + CMatrix::identity(rows, rows) * Complex64::new(n0, 0.0);
        if let Some(chol) = Cholesky::new(gram) {
            return Ok((h.adjoint() * chol.solve(y), false));
        }
    }
    let pinv = h
        .clone()
        .pseudo_inverse(1e-12 * h.camax().max(f64::MIN_POSITIVE))
        .map_err(|e| OtfsError::Numerical(e.to_string()))?;
    Ok((pinv * y, true))
}

/// MMSE estimate followed by nearest-point slicing.
pub fn mmse_detect(
    y: &CVector,
    h: &CMatrix,
    n0: f64,
    alphabet: &Alphabet,
) -> Result<DetectionResult> {
    let (est, pinv) = mmse_estimate(y, h, n0)?;
    let indices = est.iter().map(|&v| alphabet.slice(v)).collect();
    Ok(DetectionResult::new(indices, alphabet, None, pinv))
}

/// Hamming distance between two bit vectors.
pub fn count_bit_errors(truth: &[u8], detected: &[u8]) -> Result<u64> {
    if truth.len() != detected.len() {
        return Err(OtfsError::LengthMismatch {
            expected: truth.len(),
            got: detected.len(),
        });
    }
    Ok(truth.iter().zip(detected).filter(|(a, b)| a != b).count() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_h_integer, gen_gains, ChannelProfile, PathSpec};
    use crate::grid::OtfsGrid;
    use crate::modem::add_awgn;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn four_path_h(seed: u64) -> CMatrix {
        let g = OtfsGrid::new(2, 2, 3.75e3).unwrap();
        let gains = gen_gains(4, seed);
        let taps = [(0, 0), (0, 1), (1, 0), (1, 1)];
        let p = ChannelProfile::new(
            g,
            taps.iter()
                .zip(&gains)
                .map(|(&(a, b), &h)| PathSpec::integer(h, a, b))
                .collect(),
        )
        .unwrap();
        build_h_integer(&p).unwrap().into_matrix()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(r, cols, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn random_indices(rng: &mut ChaCha8Rng, q: usize, len: usize) -> Vec<usize> {
        (0..len).map(|_| rng.random_range(0..q)).collect()
    }

    #[test]
    fn triangularization_preserves_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let cols = rng.random_range(1..=8usize);
            let rows = cols + rng.random_range(0..=4usize);
            let h = random_matrix(&mut rng, rows, cols);
            let y = random_matrix(&mut rng, rows, 1);
            let mut r = CMatrix::zeros(rows, cols + 1);
            r.columns_mut(0, cols).copy_from(&h);
            r.column_mut(cols).copy_from(&y);
            householder_triangularize(&mut r, cols);
            for j in 0..cols {
                assert!((j + 1..rows).all(|i| r[(i, j)] == c(0.0, 0.0)));
            }
            let tail: f64 = (cols..rows).map(|i| r[(i, cols)].norm_sqr()).sum();
            let x = random_matrix(&mut rng, cols, 1);
            let direct = (&y - &h * &x).norm_squared();
            let tri = (r.view((0, cols), (cols, 1)) - r.view((0, 0), (cols, cols)) * &x)
                .norm_squared()
                + tail;
            assert!(
                (direct - tri).abs() < 1e-10 * (1.0 + direct),
                "{direct} vs {tri}"
            );
        }
    }

    /// Plain nested enumeration with first-minimum selection.
    fn brute_force(y: &CVector, h: &CMatrix, a: &Alphabet) -> Vec<usize> {
        let len = h.ncols();
        let q = a.len();
        let mut best = (f64::INFINITY, vec![]);
        for code in 0..q.pow(len as u32) {
            let mut idx = vec![0; len];
            let mut rem = code;
            for i in (0..len).rev() {
                idx[i] = rem % q;
                rem /= q;
            }
            let d = (y - h * a.modulate(&idx)).norm_squared();
            if d < best.0 {
                best = (d, idx);
            }
        }
        best.1
    }

    #[test]
    fn noiseless_ml_recovers_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Alphabet::bpsk();
        for s in 0..20 {
            let h = four_path_h(s);
            let idx = random_indices(&mut rng, 2, 4);
            let y = &h * a.modulate(&idx);
            let r = ml_detect(&y, &h, &a, DEFAULT_ENUMERATION_CAP).unwrap();
            assert_eq!(r.indices, idx);
            assert!(r.metric.unwrap() < 1e-20);
        }
    }

    #[test]
    fn sphere_and_exhaustive_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Alphabet::bpsk();
        for s in 0..1000 {
            let h = four_path_h(1000 + s);
            let idx = random_indices(&mut rng, 2, 4);
            let mut y = &h * a.modulate(&idx);
            add_awgn(y.as_mut_slice(), 0.5, &mut rng);
            let oracle = brute_force(&y, &h, &a);
            assert_eq!(
                ml_detect(&y, &h, &a, DEFAULT_ENUMERATION_CAP)
                    .unwrap()
                    .indices,
                oracle
            );
            assert_eq!(
                ml_detect_exhaustive(&y, &h, &a, DEFAULT_ENUMERATION_CAP)
                    .unwrap()
                    .indices,
                oracle
            );
        }
        let q8 = Alphabet::qam8();
        for _ in 0..100 {
            let h = random_matrix(&mut rng, 4, 4);
            let idx = random_indices(&mut rng, 8, 4);
            let mut y = &h * q8.modulate(&idx);
            add_awgn(y.as_mut_slice(), 0.2, &mut rng);
            let oracle = brute_force(&y, &h, &q8);
            assert_eq!(
                ml_detect(&y, &h, &q8, DEFAULT_ENUMERATION_CAP)
                    .unwrap()
                    .indices,
                oracle
            );
            assert_eq!(
                ml_detect_exhaustive(&y, &h, &q8, DEFAULT_ENUMERATION_CAP)
                    .unwrap()
                    .indices,
                oracle
            );
        }
    }

    #[test]
    fn ties_resolve_to_smallest_pattern() {
        // Zero channel: every hypothesis has the same metric.
        let a = Alphabet::bpsk();
        let h = CMatrix::zeros(3, 3);
        let y = CVector::from_element(3, c(0.3, 0.1));
        assert_eq!(ml_detect(&y, &h, &a, 64).unwrap().bits, vec![0, 0, 0]);
        assert_eq!(
            ml_detect_exhaustive(&y, &h, &a, 64).unwrap().bits,
            vec![0, 0, 0]
        );
        // Rank-deficient: the first two columns are equal, so (+,-) and (-,+) tie.
        let h =
            CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        let y = CVector::zeros(2);
        assert_eq!(ml_detect(&y, &h, &a, 64).unwrap().indices, vec![0, 1]);
        assert_eq!(
            ml_detect_exhaustive(&y, &h, &a, 64).unwrap().indices,
            vec![0, 1]
        );
    }

    #[test]
    fn cap_is_enforced() {
        let a = Alphabet::qam8();
        let h = CMatrix::identity(4, 4);
        let y = CVector::zeros(4);
        assert!(ml_detect(&y, &h, &a, DEFAULT_ENUMERATION_CAP).is_ok());
        match ml_detect(&y, &h, &a, 4095) {
            Err(OtfsError::CapExceeded { required, .. }) => assert_eq!(required, 4096),
            other => panic!("{other:?}"),
        }
        let big = CMatrix::identity(21, 21);
        assert!(matches!(
            ml_detect(
                &CVector::zeros(21),
                &big,
                &Alphabet::bpsk(),
                DEFAULT_ENUMERATION_CAP
            ),
            Err(OtfsError::CapExceeded { .. })
        ));
    }

    #[test]
    fn ml_invariant_under_unitary_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Alphabet::bpsk();
        for s in 0..50 {
            let h = four_path_h(500 + s);
            let mut y = &h * a.modulate(&random_indices(&mut rng, 2, 4));
            add_awgn(y.as_mut_slice(), 1.0, &mut rng);
            let u = random_matrix(&mut rng, 4, 4).qr().q();
            let base = ml_detect(&y, &h, &a, 64).unwrap().indices;
            assert_eq!(
                ml_detect(&(&u * &y), &(&u * &h), &a, 64).unwrap().indices,
                base
            );
        }
    }

    #[test]
    fn mmse_identity_slices_directly() {
        let a = Alphabet::bpsk();
        let h = CMatrix::identity(3, 3);
        let y = CVector::from_vec(vec![c(0.2, 5.0), c(-0.1, 0.0), c(3.0, -1.0)]);
        let r = mmse_detect(&y, &h, 1e-12, &a).unwrap();
        assert_eq!(r.indices, vec![0, 1, 0]);
        assert!(!r.pseudo_inverse);
    }

    #[test]
    fn mmse_recovers_noiseless_and_flags_pinv() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Alphabet::qam8();
        let h = random_matrix(&mut rng, 5, 5);
        let idx = random_indices(&mut rng, 8, 5);
        let y = &h * a.modulate(&idx);
        assert_eq!(mmse_detect(&y, &h, 1e-12, &a).unwrap().indices, idx);
        let r = mmse_detect(&y, &h, 0.0, &a).unwrap();
        assert!(r.pseudo_inverse);
        assert_eq!(r.indices, idx);
    }

    #[test]
    fn mmse_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (rows, cols) = (rng.random_range(2..7), rng.random_range(1..7));
            let h = random_matrix(&mut rng, rows, cols);
            let y = CVector::from_fn(rows, |_, _| c(rng.random(), rng.random()));
            let n0 = rng.random_range(0.01..2.0);
            let (est, _) = mmse_estimate(&y, &h, n0).unwrap();
            let gram = h.adjoint() * &h + CMatrix::identity(cols, cols) * c(n0, 0.0);
            let oracle = gram.lu().solve(&(h.adjoint() * &y)).unwrap();
            assert!((est - oracle).camax() < 1e-8);
        }
    }

    #[test]
    fn mmse_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = random_matrix(&mut rng, 4, 4) + CMatrix::identity(4, 4) * c(3.0, 0.0);
        let y = CVector::from_fn(4, |_, _| c(rng.random(), rng.random()));
        let (small, _) = mmse_estimate(&y, &h, 1e-10).unwrap();
        let zf = h.clone().try_inverse().unwrap() * &y;
        assert!((small - zf).camax() < 1e-6);
        let n0 = 1e9;
        let (large, _) = mmse_estimate(&y, &h, n0).unwrap();
        let mf = h.adjoint() * &y / c(n0, 0.0);
        assert!((large - &mf).camax() < 1e-6 * mf.camax());
    }

    #[test]
    fn bit_error_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a: Vec<u8> = (0..100).map(|_| rng.random_range(0..2)).collect();
        let b: Vec<u8> = (0..100).map(|_| rng.random_range(0..2)).collect();
        assert_eq!(count_bit_errors(&a, &a).unwrap(), 0);
        let flipped: Vec<u8> = a.iter().map(|v| 1 - v).collect();
        assert_eq!(count_bit_errors(&a, &flipped).unwrap(), 100);
        let xor: u32 = a.iter().zip(&b).map(|(x, y)| (x ^ y) as u32).sum();
        assert_eq!(count_bit_errors(&a, &b).unwrap(), xor as u64);
        assert!(count_bit_errors(&a, &b[..99]).is_err());
    }
}
