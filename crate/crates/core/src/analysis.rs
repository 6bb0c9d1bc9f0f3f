//! Symbol-matrix form of the channel, pairwise rank analysis, PEP/BER bounds and
//! block-circulant eigenvalues.
//!
//! With `h'` the row of effective gains, the received frame can be written
//! `y^T = h' X + v^T` where `X` is `P x MN`. Row `i` of `X` holds the transmit symbols as
//! seen through path `i`. The ordered-pair difference matrices `X_i - X_j` govern pairwise
//! error probabilities; their ranks give the diversity order.
//!
//! Because `X` is linear in the transmit vector, `X_i - X_j` only depends on the difference
//! vector `x_i - x_j`. Rank scans therefore enumerate difference vectors and weight each by
//! the number of ordered pairs that produce it.

use std::collections::{BTreeSet, HashSet};
use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{spreading_weights, ChannelProfile};
use crate::error::{check_cap, hypothesis_count, OtfsError, Result};
use crate::grid::Alphabet;
use crate::modem::PhaseRotation;
use crate::CMatrix;

/// Default relative singular-value threshold for numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Rows whose squared sine of angle exceeds this are certainly independent, so the scan
/// can skip the SVD.
const PARALLEL_PREFILTER: f64 = 1e-6;

const SCAN_CHUNK: usize = 4096;

/// The `P x MN` matrix `X` for one transmit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolMatrix {
    matrix: CMatrix,
}

impl SymbolMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }
}

/// Linear map from a transmit vector to its symbol matrix.
#[derive(Debug, Clone)]
pub(crate) struct SymbolMap {
    rows: usize,
    cols: usize,
    kind: MapKind,
}

#[derive(Debug, Clone)]
enum MapKind {
    /// `X[i, c] = x[src[i * MN + c]]`.
    Permutation(Vec<usize>),
    /// `X[i, :] = (W_i x)^T`.
    Dense(Vec<CMatrix>),
}

impl SymbolMap {
    pub(crate) fn new(profile: &ChannelProfile) -> Self {
        let grid = profile.grid();
        let (m, n) = (grid.m(), grid.n());
        let mn = m * n;
        let rows = profile.num_paths();
        if profile.is_integer() {
            let mut src = Vec::with_capacity(rows * mn);
            for p in profile.paths() {
                let beta = p.doppler_bin(n);
                for c in 0..mn {
                    let (k, l) = grid.coords(c);
                    src.push(grid.index((k + n - beta) % n, (l + m - p.delay_tap) % m));
                }
            }
            return SymbolMap {
                rows,
                cols: mn,
                kind: MapKind::Permutation(src),
            };
        }
        let weights = profile
            .paths()
            .iter()
            .map(|p| {
                let (wf, wg) = spreading_weights(p, m, n);
                let beta = p.doppler_bin(n);
                let mut w = CMatrix::zeros(mn, mn);
                for q in 0..m {
                    for qd in 0..n {
                        let c = wf[q] * wg[qd];
                        for l in 0..m {
                            let src_l = (l + m - p.delay_tap + q) % m;
                            for k in 0..n {
                                let src_k = (k + n - beta + qd) % n;
                                w[(grid.index(k, l), grid.index(src_k, src_l))] += c;
                            }
                        }
                    }
                }
                w
            })
            .collect();
        SymbolMap {
            rows,
            cols: mn,
            kind: MapKind::Dense(weights),
        }
    }

    pub(crate) fn apply_into(&self, x: &[Complex64], out: &mut CMatrix) {
        match &self.kind {
            MapKind::Permutation(src) => {
                for i in 0..self.rows {
                    for c in 0..self.cols {
                        out[(i, c)] = x[src[i * self.cols + c]];
                    }
                }
            }
            MapKind::Dense(ws) => {
                for (i, w) in ws.iter().enumerate() {
                    for r in 0..self.cols {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for c in 0..self.cols {
                            acc += w[(r, c)] * x[c];
                        }
                        out[(i, r)] = acc;
                    }
                }
            }
        }
    }

    pub(crate) fn apply(&self, x: &[Complex64]) -> CMatrix {
        let mut out = CMatrix::zeros(self.rows, self.cols);
        self.apply_into(x, &mut out);
        out
    }
}

fn check_frame_len(x: &[Complex64], profile: &ChannelProfile) -> Result<()> {
    let mn = profile.grid().frame_size();
    if x.len() != mn {
        return Err(OtfsError::LengthMismatch {
            expected: mn,
            got: x.len(),
        });
    }
    Ok(())
}

/// Symbol matrix for an integer-tap profile: row `i`, column `k + N l` holds
/// `x[(k - beta_i)_N + N (l - alpha_i)_M]`.
pub fn build_symbol_matrix(x: &[Complex64], profile: &ChannelProfile) -> Result<SymbolMatrix> {
    if !profile.is_integer() {
        return Err(OtfsError::Unsupported(
            "fractional taps present; use build_symbol_matrix_frac".into(),
        ));
    }
    check_frame_len(x, profile)?;
    Ok(SymbolMatrix {
        matrix: SymbolMap::new(profile).apply(x),
    })
}

/// Symbol matrix for arbitrary taps; each row is the kernel-weighted spread of `x` seen
/// through one path.
pub fn build_symbol_matrix_frac(x: &[Complex64], profile: &ChannelProfile) -> Result<SymbolMatrix> {
    check_frame_len(x, profile)?;
    Ok(SymbolMatrix {
        matrix: SymbolMap::new(profile).apply(x),
    })
}

/// Singular values in descending order.
pub fn singular_values(d: &CMatrix) -> Vec<f64> {
    if d.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = d.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Number of singular values above `rel_tol` times the largest.
pub fn matrix_rank(d: &CMatrix, rel_tol: f64) -> usize {
    rank_from_singular_values(&singular_values(d), rel_tol)
}

fn rank_from_singular_values(sv: &[f64], rel_tol: f64) -> usize {
    match sv.first() {
        Some(&max) if max > 0.0 => sv.iter().filter(|&&s| s > rel_tol * max).count(),
        _ => 0,
    }
}

/// The single nonzero singular value `sqrt(4 P M N)` of an all-constant BPSK difference.
pub fn rank_one_singular_value(m: usize, n: usize, p: usize) -> f64 {
    (4.0 * (p * m * n) as f64).sqrt()
}

/// Chernoff-type PEP bound `prod_l 1 / (1 + gamma lambda_l^2 / (4P))` over the singular
/// values above `rel_tol`.
pub fn pep_chernoff_upper(d: &CMatrix, gamma: f64, p: usize, rel_tol: f64) -> f64 {
    let sv = singular_values(d);
    let r = rank_from_singular_values(&sv, rel_tol);
    let sq: Vec<f64> = sv[..r].iter().map(|s| s * s).collect();
    pep_chernoff_from_squares(&sq, gamma, p)
}

fn pep_chernoff_from_squares(sq: &[f64], gamma: f64, p: usize) -> f64 {
    sq.iter()
        .map(|s2| 1.0 / (1.0 + gamma * s2 / (4.0 * p as f64)))
        .product()
}

/// Exact PEP of a rank-one BPSK all-constant pair, `(1 - sqrt(MN / (MN + 1/gamma))) / 2`.
pub fn pep_exact_rank_one(gamma: f64, m: usize, n: usize) -> f64 {
    if gamma <= 0.0 {
        return 0.5;
    }
    let mn = (m * n) as f64;
    0.5 * (1.0 - (mn / (mn + 1.0 / gamma)).sqrt())
}

/// `kappa / 2^{MN}` as a float.
pub fn kappa_ratio(kappa: u128, m: usize, n: usize) -> f64 {
    kappa as f64 / 2f64.powi((m * n) as i32)
}

/// Diversity-one lower bound `(kappa / 2^{MN}) * pep_exact_rank_one`.
pub fn ber_lower_bound(gamma: f64, m: usize, n: usize, kappa: u128) -> f64 {
    kappa_ratio(kappa, m, n) * pep_exact_rank_one(gamma, m, n)
}

/// High-SNR form `(kappa / 2^{MN}) / (4 gamma M N)`.
pub fn ber_lower_bound_asymptotic(gamma: f64, m: usize, n: usize, kappa: u128) -> f64 {
    if kappa == 0 {
        return 0.0;
    }
    kappa_ratio(kappa, m, n) / (4.0 * gamma * (m * n) as f64)
}

/// How a rank scan covers the pair space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanMode {
    /// Exhaustive when the number of difference classes fits the cap, sampled otherwise.
    #[default]
    Auto,
    Exhaustive,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankScanOptions {
    pub rel_tol: f64,
    /// Limit on the number of difference classes `|A - A|^{MN}` in exhaustive mode.
    pub cap: u64,
    pub mode: ScanMode,
    /// Random ordered pairs drawn in sampled mode, on top of the structured ones.
    pub samples: usize,
    pub seed: u64,
    /// Maximum number of rank-one pairs listed in the report.
    pub witness_limit: usize,
}

impl Default for RankScanOptions {
    fn default() -> Self {
        RankScanOptions {
            rel_tol: DEFAULT_RANK_TOL,
            cap: crate::detect::DEFAULT_ENUMERATION_CAP,
            mode: ScanMode::Auto,
            samples: 100_000,
            seed: 0,
            witness_limit: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Certificate {
    /// Every ordered pair was covered.
    Exhaustive,
    /// Only the listed number of ordered pairs was examined; `kappa` is a lower bound.
    Sampled { pairs: u64 },
}

/// An ordered pair of transmit vectors, as alphabet indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairWitness {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    /// Minimum rank of `X_i - X_j` over the examined ordered pairs.
    pub min_rank: usize,
    /// Number of ordered pairs with a rank-one difference.
    pub kappa: u128,
    /// Ordered pairs covered by the scan.
    pub pairs_examined: u128,
    /// Rank-one pairs in lexicographic order, truncated to the witness limit.
    pub witnesses: Vec<PairWitness>,
    /// A pair attaining the minimum rank.
    pub min_rank_witness: Option<PairWitness>,
    pub rel_tol: f64,
    pub certificate: Certificate,
    /// Receive-antenna multiplier applied to the minimum rank (1 for single antenna).
    pub diversity_multiplier: usize,
}

impl RankReport {
    /// `diversity_multiplier * min_rank`.
    pub fn diversity_order(&self) -> usize {
        self.diversity_multiplier * self.min_rank
    }
}

/// Distinct differences `a - b` of an alphabet with their multiplicities.
#[derive(Debug, Clone)]
pub(crate) struct DifferenceSet {
    pub values: Vec<Complex64>,
    pub counts: Vec<u64>,
    /// Ordered point pairs producing each difference.
    pub pairs: Vec<Vec<(usize, usize)>>,
    pub zero: usize,
}

impl DifferenceSet {
    pub(crate) fn new(alphabet: &Alphabet) -> Self {
        let pts = alphabet.points();
        let mut values: Vec<Complex64> = Vec::new();
        let mut pairs: Vec<Vec<(usize, usize)>> = Vec::new();
        for (a, pa) in pts.iter().enumerate() {
            for (b, pb) in pts.iter().enumerate() {
                let d = pa - pb;
                match values.iter().position(|v| (v - d).norm() < 1e-12) {
                    Some(i) => pairs[i].push((a, b)),
                    None => {
                        values.push(d);
                        pairs.push(vec![(a, b)]);
                    }
                }
            }
        }
        let zero = values
            .iter()
            .position(|v| v.norm() < 1e-12)
            .expect("a - a is a difference");
        DifferenceSet {
            counts: pairs.iter().map(|p| p.len() as u64).collect(),
            values,
            pairs,
            zero,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.values.len()
    }
}

/// Decode class `index` into per-position difference digits, last position fastest.
fn decode_class(mut index: u128, base: usize, digits: &mut [usize]) {
    for d in digits.iter_mut().rev() {
        *d = (index % base as u128) as usize;
        index /= base as u128;
    }
}

fn advance(digits: &mut [usize], base: usize) {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < base {
            return;
        }
        *d = 0;
    }
}

/// Scratch space for evaluating one difference class.
struct ClassEval<'a> {
    map: &'a SymbolMap,
    phi: Option<&'a PhaseRotation>,
    diffs: &'a DifferenceSet,
    delta: Vec<Complex64>,
    x: CMatrix,
}

impl<'a> ClassEval<'a> {
    fn new(map: &'a SymbolMap, phi: Option<&'a PhaseRotation>, diffs: &'a DifferenceSet) -> Self {
        ClassEval {
            map,
            phi,
            diffs,
            delta: vec![Complex64::new(0.0, 0.0); map.cols],
            x: CMatrix::zeros(map.rows, map.cols),
        }
    }

    fn load_digits(&mut self, digits: &[usize]) {
        for (i, &d) in digits.iter().enumerate() {
            self.delta[i] = self.diffs.values[d];
        }
        self.finish_load();
    }

    fn load_vector(&mut self, delta: &[Complex64]) {
        self.delta.copy_from_slice(delta);
        self.finish_load();
    }

    fn finish_load(&mut self) {
        if let Some(phi) = self.phi {
            for (v, p) in self.delta.iter_mut().zip(phi.entries()) {
                *v *= p;
            }
        }
        self.map.apply_into(&self.delta, &mut self.x);
    }

    /// True when every row is numerically parallel to the strongest one.
    fn rows_parallel(&self) -> bool {
        let x = &self.x;
        let norms: Vec<f64> = (0..x.nrows()).map(|i| x.row(i).norm_squared()).collect();
        let (r0, &n0) = norms
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .expect("at least one row");
        if n0 == 0.0 {
            return true;
        }
        (0..x.nrows()).all(|i| {
            if i == r0 || norms[i] <= 1e-24 * n0 {
                return true;
            }
            let mut inner = Complex64::new(0.0, 0.0);
            for c in 0..x.ncols() {
                inner += x[(r0, c)].conj() * x[(i, c)];
            }
            1.0 - inner.norm_sqr() / (n0 * norms[i]) <= PARALLEL_PREFILTER
        })
    }

    /// Exact rank, or `None` when the rows are clearly not parallel and `skip_above_one`.
    fn rank(&self, rel_tol: f64, skip_above_one: bool) -> Option<usize> {
        if skip_above_one && !self.rows_parallel() {
            return None;
        }
        Some(matrix_rank(&self.x, rel_tol))
    }
}

#[derive(Default)]
struct ScanPartial {
    min_rank: Option<(usize, u128)>,
    kappa: u128,
    rank_one_classes: Vec<u128>,
}

/// Number of difference classes `|A - A|^{MN}` an exhaustive scan visits.
pub fn difference_class_count(alphabet: &Alphabet, frame_len: usize) -> u128 {
    hypothesis_count(DifferenceSet::new(alphabet).len(), frame_len)
}

/// Rank scan over ordered pairs of transmit vectors for one profile geometry.
///
/// Gains of `profile` are irrelevant. With `phi` the pairs are rotated before the symbol
/// matrix is formed.
pub fn enumerate_rank_one_pairs(
    profile: &ChannelProfile,
    alphabet: &Alphabet,
    phi: Option<&PhaseRotation>,
    opts: &RankScanOptions,
) -> Result<RankReport> {
    let mn = profile.grid().frame_size();
    if let Some(phi) = phi {
        if phi.len() != mn {
            return Err(OtfsError::LengthMismatch {
                expected: mn,
                got: phi.len(),
            });
        }
    }
    let diffs = DifferenceSet::new(alphabet);
    let classes = hypothesis_count(diffs.len(), mn);
    let exhaustive = match opts.mode {
        ScanMode::Exhaustive => {
            check_cap("rank scan", diffs.len(), mn, opts.cap)?;
            true
        }
        ScanMode::Auto => classes <= opts.cap as u128,
        ScanMode::Sampled => false,
    };
    let map = SymbolMap::new(profile);
    if exhaustive {
        exhaustive_scan(&map, &diffs, phi, alphabet, opts)
    } else {
        sampled_scan(profile, &map, &diffs, phi, alphabet, opts)
    }
}

/// Same scan as [`enumerate_rank_one_pairs`]; the name reads better when the minimum rank
/// is what the caller wants.
pub fn min_rank_over_pairs(
    profile: &ChannelProfile,
    alphabet: &Alphabet,
    phi: Option<&PhaseRotation>,
    opts: &RankScanOptions,
) -> Result<RankReport> {
    enumerate_rank_one_pairs(profile, alphabet, phi, opts)
}

fn exhaustive_scan(
    map: &SymbolMap,
    diffs: &DifferenceSet,
    phi: Option<&PhaseRotation>,
    alphabet: &Alphabet,
    opts: &RankScanOptions,
) -> Result<RankReport> {
    let mn = map.cols;
    let base = diffs.len();
    let classes = hypothesis_count(base, mn);
    let chunks = classes.div_ceil(SCAN_CHUNK as u128) as usize;
    let global_min = AtomicUsize::new(usize::MAX);
    let witness_cap = opts.witness_limit.max(1);

    let partials: Vec<ScanPartial> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut eval = ClassEval::new(map, phi, diffs);
            let mut part = ScanPartial::default();
            let start = chunk as u128 * SCAN_CHUNK as u128;
            let end = (start + SCAN_CHUNK as u128).min(classes);
            let mut digits = vec![0usize; mn];
            decode_class(start, base, &mut digits);
            for class in start..end {
                if class > start {
                    advance(&mut digits, base);
                }
                if digits.iter().all(|&d| d == diffs.zero) {
                    continue;
                }
                eval.load_digits(&digits);
                let skip = global_min.load(Ordering::Relaxed) == 1;
                let Some(rank) = eval.rank(opts.rel_tol, skip) else {
                    continue;
                };
                let weight: u128 = digits.iter().map(|&d| diffs.counts[d] as u128).product();
                if rank == 1 {
                    part.kappa += weight;
                    if part.rank_one_classes.len() < witness_cap {
                        part.rank_one_classes.push(class);
                    }
                }
                match part.min_rank {
                    Some((r, _)) if r <= rank => {}
                    _ => {
                        part.min_rank = Some((rank, class));
                        global_min.fetch_min(rank, Ordering::Relaxed);
                    }
                }
            }
            part
        })
        .collect();

    let mut kappa = 0u128;
    let mut min: Option<(usize, u128)> = None;
    let mut rank_one_classes = Vec::new();
    for p in partials {
        kappa += p.kappa;
        rank_one_classes.extend(p.rank_one_classes);
        if let Some((r, c)) = p.min_rank {
            if min.is_none_or(|(mr, mc)| r < mr || (r == mr && c < mc)) {
                min = Some((r, c));
            }
        }
    }
    let (min_rank, min_class) =
        min.ok_or_else(|| OtfsError::config("alphabet needs at least two points"))?;

    let mut witnesses = BTreeSet::new();
    let mut digits = vec![0usize; mn];
    for class in rank_one_classes {
        decode_class(class, base, &mut digits);
        expand_pairs(&digits, diffs, opts.witness_limit, &mut witnesses);
    }
    let witnesses: Vec<PairWitness> = witnesses.into_iter().take(opts.witness_limit).collect();
    decode_class(min_class, base, &mut digits);
    let mut first = BTreeSet::new();
    expand_pairs(&digits, diffs, 1, &mut first);
    let q = alphabet.len();
    let hyp = hypothesis_count(q, mn);
    Ok(RankReport {
        min_rank,
        kappa,
        pairs_examined: hyp.saturating_mul(hyp.saturating_sub(1)),
        witnesses,
        min_rank_witness: first.into_iter().next(),
        rel_tol: opts.rel_tol,
        certificate: Certificate::Exhaustive,
        diversity_multiplier: 1,
    })
}

/// Insert up to `limit` ordered pairs whose difference is the class `digits`.
fn expand_pairs(
    digits: &[usize],
    diffs: &DifferenceSet,
    limit: usize,
    out: &mut BTreeSet<PairWitness>,
) {
    let lists: Vec<&Vec<(usize, usize)>> = digits.iter().map(|&d| &diffs.pairs[d]).collect();
    let mut pos = vec![0usize; digits.len()];
    let mut added = 0;
    loop {
        if added >= limit {
            return;
        }
        out.insert(PairWitness {
            first: pos.iter().zip(&lists).map(|(&p, l)| l[p].0).collect(),
            second: pos.iter().zip(&lists).map(|(&p, l)| l[p].1).collect(),
        });
        added += 1;
        let mut i = digits.len();
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            pos[i] += 1;
            if pos[i] < lists[i].len() {
                break;
            }
            pos[i] = 0;
        }
    }
}

/// Real `+-1` characters of `Z_N x Z_M`, as sign patterns over the flattened frame.
fn sign_characters(profile: &ChannelProfile) -> Vec<Vec<bool>> {
    let g = profile.grid();
    let (m, n) = (g.m(), g.n());
    let ek: &[usize] = if n % 2 == 0 { &[0, 1] } else { &[0] };
    let el: &[usize] = if m % 2 == 0 { &[0, 1] } else { &[0] };
    let mut out = Vec::new();
    for &a in ek {
        for &b in el {
            out.push(
                (0..g.frame_size())
                    .map(|i| {
                        let (k, l) = g.coords(i);
                        (a * k + b * l) % 2 == 0
                    })
                    .collect(),
            );
        }
    }
    out
}

fn sampled_scan(
    profile: &ChannelProfile,
    map: &SymbolMap,
    diffs: &DifferenceSet,
    phi: Option<&PhaseRotation>,
    alphabet: &Alphabet,
    opts: &RankScanOptions,
) -> Result<RankReport> {
    let mn = map.cols;
    let q = alphabet.len();
    if q < 2 {
        return Err(OtfsError::config("alphabet needs at least two points"));
    }
    let mut pairs: Vec<PairWitness> = Vec::new();
    // Structured pairs: two points laid out along every real sign character, which covers
    // the all-constant differences.
    for chi in sign_characters(profile) {
        for a in 0..q {
            for b in 0..q {
                if a != b {
                    pairs.push(PairWitness {
                        first: chi.iter().map(|&s| if s { a } else { b }).collect(),
                        second: chi.iter().map(|&s| if s { b } else { a }).collect(),
                    });
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.samples {
        let first: Vec<usize> = (0..mn).map(|_| rng.random_range(0..q)).collect();
        let mut second: Vec<usize> = (0..mn).map(|_| rng.random_range(0..q)).collect();
        if first == second {
            let i = rng.random_range(0..mn);
            second[i] = (second[i] + rng.random_range(1..q)) % q;
        }
        pairs.push(PairWitness { first, second });
    }
    let mut seen = HashSet::new();
    pairs.retain(|p| seen.insert(p.clone()));

    let pts = alphabet.points();
    let results: Vec<usize> = pairs
        .par_chunks(SCAN_CHUNK)
        .flat_map_iter(|chunk| {
            let mut eval = ClassEval::new(map, phi, diffs);
            let mut delta = vec![Complex64::new(0.0, 0.0); mn];
            chunk
                .iter()
                .map(|p| {
                    for i in 0..mn {
                        delta[i] = pts[p.first[i]] - pts[p.second[i]];
                    }
                    eval.load_vector(&delta);
                    eval.rank(opts.rel_tol, false)
                        .expect("exact rank requested")
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let mut min: Option<(usize, usize)> = None;
    let mut witnesses = Vec::new();
    let mut kappa = 0u128;
    for (i, &r) in results.iter().enumerate() {
        if r == 1 {
            kappa += 1;
            witnesses.push(pairs[i].clone());
        }
        if min.is_none_or(|(mr, _)| r < mr) {
            min = Some((r, i));
        }
    }
    witnesses.sort();
    witnesses.truncate(opts.witness_limit);
    let (min_rank, min_i) = min.expect("structured pairs are never empty");
    Ok(RankReport {
        min_rank,
        kappa,
        pairs_examined: pairs.len() as u128,
        witnesses,
        min_rank_witness: Some(pairs[min_i].clone()),
        rel_tol: opts.rel_tol,
        certificate: Certificate::Sampled {
            pairs: pairs.len() as u64,
        },
        diversity_multiplier: 1,
    })
}

/// Pairwise terms of the union bound, prepared once per geometry.
#[derive(Debug, Clone)]
pub struct UnionBound {
    /// `(ordered pair count, squared singular values)` per nonzero difference class.
    terms: Vec<(u128, Vec<f64>)>,
    hypotheses: f64,
    paths: usize,
}

impl UnionBound {
    /// Enumerate every difference class. Fails when `|A - A|^{MN}` exceeds `cap`.
    pub fn prepare(
        profile: &ChannelProfile,
        alphabet: &Alphabet,
        phi: Option<&PhaseRotation>,
        rel_tol: f64,
        cap: u64,
    ) -> Result<Self> {
        let mn = profile.grid().frame_size();
        let diffs = DifferenceSet::new(alphabet);
        let classes = check_cap("union bound", diffs.len(), mn, cap)?;
        let map = SymbolMap::new(profile);
        let base = diffs.len();
        let chunks = classes.div_ceil(SCAN_CHUNK as u128) as usize;
        let terms: Vec<(u128, Vec<f64>)> = (0..chunks)
            .into_par_iter()
            .flat_map_iter(|chunk| {
                let mut eval = ClassEval::new(&map, phi, &diffs);
                let start = chunk as u128 * SCAN_CHUNK as u128;
                let end = (start + SCAN_CHUNK as u128).min(classes);
                let mut digits = vec![0usize; mn];
                decode_class(start, base, &mut digits);
                let mut out = Vec::new();
                for class in start..end {
                    if class > start {
                        advance(&mut digits, base);
                    }
                    if digits.iter().all(|&d| d == diffs.zero) {
                        continue;
                    }
                    eval.load_digits(&digits);
                    let sv = singular_values(&eval.x);
                    let r = rank_from_singular_values(&sv, rel_tol);
                    let weight: u128 = digits.iter().map(|&d| diffs.counts[d] as u128).product();
                    out.push((weight, sv[..r].iter().map(|s| s * s).collect()));
                }
                out
            })
            .collect();
        Ok(UnionBound {
            terms,
            hypotheses: hypothesis_count(alphabet.len(), mn) as f64,
            paths: profile.num_paths(),
        })
    }

    /// `min(1, |A|^{-MN} sum_{i != j} pep_chernoff_upper(X_i - X_j))`.
    pub fn evaluate(&self, gamma: f64) -> f64 {
        let total: f64 = self
            .terms
            .iter()
            .map(|(w, sq)| *w as f64 * pep_chernoff_from_squares(sq, gamma, self.paths))
            .sum();
        (total / self.hypotheses).min(1.0)
    }
}

/// One-shot union bound; prefer [`UnionBound`] when evaluating many SNRs.
pub fn union_upper_bound(
    profile: &ChannelProfile,
    alphabet: &Alphabet,
    phi: Option<&PhaseRotation>,
    gamma: f64,
    cap: u64,
) -> Result<f64> {
    Ok(UnionBound::prepare(profile, alphabet, phi, DEFAULT_RANK_TOL, cap)?.evaluate(gamma))
}

/// Eigenvalues of a block-circulant matrix with circulant blocks.
///
/// Rows are indexed by the shift `beta + N alpha` and columns by `k + N l`, with
/// `D[beta + N alpha, k + N l] = D[0, (k - beta)_N + N (l - alpha)_M]`, which is the layout of
/// a full-grid symbol matrix. Eigenvalue `u + N v` is
/// `sum_l lambda_u^(l) e^{j 2 pi v l / M}` with `lambda_u^(l) = sum_q D[0, q + N l] e^{-j 2 pi u q / N}`.
pub fn block_circulant_eigs(d: &CMatrix, m: usize, n: usize) -> Result<Vec<Complex64>> {
    let mn = m * n;
    if d.nrows() != mn || d.ncols() != mn {
        return Err(OtfsError::NotBlockCirculant);
    }
    let tol = 1e-12 * (1.0 + d.camax());
    for alpha in 0..m {
        for beta in 0..n {
            for l in 0..m {
                for k in 0..n {
                    let expect = d[(0, (k + n - beta) % n + n * ((l + m - alpha) % m))];
                    if (d[(beta + n * alpha, k + n * l)] - expect).norm() > tol {
                        return Err(OtfsError::NotBlockCirculant);
                    }
                }
            }
        }
    }
    let mut lambda = vec![Complex64::new(0.0, 0.0); n * m];
    for l in 0..m {
        for u in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for q in 0..n {
                acc += d[(0, q + n * l)]
                    * Complex64::from_polar(1.0, -2.0 * PI * (u * q) as f64 / n as f64);
            }
            lambda[u + n * l] = acc;
        }
    }
    Ok((0..mn)
        .map(|k| {
            let (u, v) = (k % n, k / n);
            (0..m)
                .map(|l| {
                    lambda[u + n * l]
                        * Complex64::from_polar(1.0, 2.0 * PI * (v * l) as f64 / m as f64)
                })
                .sum()
        })
        .collect())
}

/// Least-squares slope of `-log10(BER)` against SNR in dB, in decades per 10 dB.
pub fn estimate_diversity_slope(curve: &[(f64, f64)]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .filter(|(_, b)| *b > 0.0 && b.is_finite())
        .map(|&(s, b)| (s, b.log10()))
        .collect();
    if pts.len() < 2 {
        return Err(OtfsError::InsufficientPoints(pts.len()));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(OtfsError::InsufficientPoints(1));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(-10.0 * sxy / sxx)
}
