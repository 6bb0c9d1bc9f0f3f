//! Sparse delay-Doppler channels and the effective channel matrix.
//!
//! A path `i` sits at delay `(alpha_i + a_i) / (M delta_f)` and Doppler
//! `(beta_i + b_i) / (N T)`. Integer-tap channels act on a delay-Doppler frame as a sum of
//! cyclic shifts; fractional parts spread each path over every bin through the kernels
//! [`frac_kernel_g`] and [`frac_kernel_f`].

use std::collections::HashSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{OtfsError, Result};
use crate::grid::OtfsGrid;
use crate::CMatrix;

/// Phase distance to a multiple of 2*pi below which a geometric kernel is evaluated by its
/// limit instead of the closed form.
pub const KERNEL_SINGULARITY_TOL: f64 = 1e-9;

/// One resolvable path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSpec {
    pub gain: Complex64,
    /// Integer delay tap `alpha` in `[0, M)`.
    pub delay_tap: usize,
    /// Integer Doppler tap `beta`. Negative Dopplers are kept signed (`-N < beta < N`) and
    /// reduced modulo `N` only when indexing the grid.
    pub doppler_tap: i64,
    /// Fractional delay `a` in `(-1/2, 1/2]`.
    pub frac_delay: f64,
    /// Fractional Doppler `b` in `(-1/2, 1/2]`.
    pub frac_doppler: f64,
}

impl PathSpec {
    pub fn integer(gain: Complex64, delay_tap: usize, doppler_tap: i64) -> Self {
        PathSpec {
            gain,
            delay_tap,
            doppler_tap,
            frac_delay: 0.0,
            frac_doppler: 0.0,
        }
    }

    /// Split a delay/Doppler given in bins into nearest integer tap plus fractional part.
    pub fn from_bins(gain: Complex64, delay_bins: f64, doppler_bins: f64) -> Self {
        let (alpha, a) = split_bins(delay_bins);
        let (beta, b) = split_bins(doppler_bins);
        PathSpec {
            gain,
            delay_tap: alpha.max(0) as usize,
            doppler_tap: beta,
            frac_delay: a,
            frac_doppler: b,
        }
    }

    /// Physical delay in seconds.
    pub fn delay(&self, grid: &OtfsGrid) -> f64 {
        (self.delay_tap as f64 + self.frac_delay) * grid.delay_resolution()
    }

    /// Physical Doppler shift in Hz.
    pub fn doppler(&self, grid: &OtfsGrid) -> f64 {
        (self.doppler_tap as f64 + self.frac_doppler) * grid.doppler_resolution()
    }

    pub fn is_integer(&self) -> bool {
        self.frac_delay == 0.0 && self.frac_doppler == 0.0
    }

    /// Doppler tap reduced into `[0, N)`.
    pub fn doppler_bin(&self, n: usize) -> usize {
        self.doppler_tap.rem_euclid(n as i64) as usize
    }
}

/// Nearest integer plus remainder in `(-1/2, 1/2]`.
fn split_bins(x: f64) -> (i64, f64) {
    let mut i = x.round();
    let mut r = x - i;
    if r <= -0.5 {
        i -= 1.0;
        r += 1.0;
    }
    (i as i64, r)
}

/// The paths of one channel realization bound to a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    grid: OtfsGrid,
    paths: Vec<PathSpec>,
}

impl ChannelProfile {
    pub fn new(grid: OtfsGrid, paths: Vec<PathSpec>) -> Result<Self> {
        if paths.is_empty() {
            return Err(OtfsError::config("channel profile needs at least one path"));
        }
        let n = grid.n() as i64;
        for (i, p) in paths.iter().enumerate() {
            if p.delay_tap >= grid.m() {
                return Err(OtfsError::config(format!(
                    "path {i}: delay tap {} outside [0, {})",
                    p.delay_tap,
                    grid.m()
                )));
            }
            if p.doppler_tap <= -n || p.doppler_tap >= n {
                return Err(OtfsError::config(format!(
                    "path {i}: Doppler tap {} outside (-{n}, {n})",
                    p.doppler_tap
                )));
            }
            for (name, v) in [("delay", p.frac_delay), ("Doppler", p.frac_doppler)] {
                if !(v > -0.5 && v <= 0.5) {
                    return Err(OtfsError::config(format!(
                        "path {i}: fractional {name} {v} outside (-1/2, 1/2]"
                    )));
                }
            }
        }
        Ok(ChannelProfile { grid, paths })
    }

    pub fn grid(&self) -> &OtfsGrid {
        &self.grid
    }

    pub fn paths(&self) -> &[PathSpec] {
        &self.paths
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn is_integer(&self) -> bool {
        self.paths.iter().all(PathSpec::is_integer)
    }

    /// The row vector `h'` of effective gains.
    pub fn effective_gains(&self) -> Vec<Complex64> {
        self.paths
            .iter()
            .map(|p| effective_gain(p, &self.grid))
            .collect()
    }

    /// Same geometry with replaced gains.
    pub fn with_gains(&self, gains: &[Complex64]) -> Result<Self> {
        if gains.len() != self.paths.len() {
            return Err(OtfsError::LengthMismatch {
                expected: self.paths.len(),
                got: gains.len(),
            });
        }
        let paths = self
            .paths
            .iter()
            .zip(gains)
            .map(|(p, &g)| PathSpec { gain: g, ..*p })
            .collect();
        Ok(ChannelProfile {
            grid: self.grid,
            paths,
        })
    }

    /// True when both profiles place their paths at identical delay-Doppler positions.
    pub fn same_geometry(&self, other: &ChannelProfile) -> bool {
        self.grid == other.grid
            && self.paths.len() == other.paths.len()
            && self.paths.iter().zip(&other.paths).all(|(a, b)| {
                a.delay_tap == b.delay_tap
                    && a.doppler_tap == b.doppler_tap
                    && a.frac_delay == b.frac_delay
                    && a.frac_doppler == b.frac_doppler
            })
    }
}

/// `h_i * exp(-j 2 pi nu_i tau_i)`.
pub fn effective_gain(path: &PathSpec, grid: &OtfsGrid) -> Complex64 {
    let phase = -2.0 * PI * path.doppler(grid) * path.delay(grid);
    path.gain * Complex64::from_polar(1.0, phase)
}

/// Draw `p` i.i.d. `CN(0, 1/p)` gains.
pub fn gen_gains(p: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_gains(&vec![1.0 / p as f64; p], &mut rng)
}

/// Draw independent `CN(0, powers[i])` gains.
pub fn draw_gains<R: Rng + ?Sized>(powers: &[f64], rng: &mut R) -> Vec<Complex64> {
    powers
        .iter()
        .map(|&pw| {
            let s = (pw / 2.0).sqrt();
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(s * re, s * im)
        })
        .collect()
}

/// Jakes Dopplers `nu_max * cos(theta)` with `theta ~ U[-pi, pi]`.
pub fn gen_jakes_dopplers(nu_max: f64, p: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_jakes_dopplers(nu_max, p, &mut rng)
}

pub fn draw_jakes_dopplers<R: Rng + ?Sized>(nu_max: f64, p: usize, rng: &mut R) -> Vec<f64> {
    (0..p)
        .map(|_| nu_max * rng.random_range(-PI..=PI).cos())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    IntegerTap,
    Fractional,
}

/// The matrix `H` of `y = Hx + v` together with the profile it was built from.
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    matrix: CMatrix,
    profile: ChannelProfile,
    kind: ChannelKind,
}

impl EffectiveChannel {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn profile(&self) -> &ChannelProfile {
        &self.profile
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }
}

/// Integer-tap channel matrix: `(Hx)[k + N l] = sum_i h'_i x[(k - beta_i)_N, (l - alpha_i)_M]`.
pub fn build_h_integer(profile: &ChannelProfile) -> Result<EffectiveChannel> {
    if !profile.is_integer() {
        return Err(OtfsError::Unsupported(
            "fractional taps present; use build_h_fractional".into(),
        ));
    }
    let grid = *profile.grid();
    let (m, n) = (grid.m(), grid.n());
    let mut seen = HashSet::new();
    for p in profile.paths() {
        if !seen.insert((p.delay_tap, p.doppler_bin(n))) {
            return Err(OtfsError::DuplicateTap {
                alpha: p.delay_tap,
                beta: p.doppler_tap,
            });
        }
    }
    let mn = grid.frame_size();
    let mut h = CMatrix::zeros(mn, mn);
    for p in profile.paths() {
        let g = effective_gain(p, &grid);
        let beta = p.doppler_bin(n);
        for l in 0..m {
            let src_l = (l + m - p.delay_tap) % m;
            for k in 0..n {
                let src_k = (k + n - beta) % n;
                h[(grid.index(k, l), grid.index(src_k, src_l))] += g;
            }
        }
    }
    Ok(EffectiveChannel {
        matrix: h,
        profile: profile.clone(),
        kind: ChannelKind::IntegerTap,
    })
}

/// `sum_{t=0}^{count-1} exp(j * step * t)` in closed form, with the exact limit `count` when
/// `step` is within [`KERNEL_SINGULARITY_TOL`] of a multiple of `2 pi`.
fn geometric_sum(step: f64, count: usize) -> Complex64 {
    let wrapped = step - 2.0 * PI * (step / (2.0 * PI)).round();
    if wrapped.abs() < KERNEL_SINGULARITY_TOL {
        return Complex64::new(count as f64, 0.0);
    }
    let num = Complex64::from_polar(1.0, step * count as f64) - 1.0;
    let den = Complex64::from_polar(1.0, step) - 1.0;
    num / den
}

/// Doppler leakage kernel `sum_{n'} exp(-j 2 pi/N (k - k' - beta - b) n')`.
pub fn frac_kernel_g(k: usize, k_prime: usize, beta: i64, b: f64, n: usize) -> Complex64 {
    let d = k as f64 - k_prime as f64 - beta as f64 - b;
    geometric_sum(-2.0 * PI * d / n as f64, n)
}

/// Delay leakage kernel `sum_{m'} exp(+j 2 pi/M (l - l' - alpha - a) m')`.
pub fn frac_kernel_f(l: usize, l_prime: usize, alpha: i64, a: f64, m: usize) -> Complex64 {
    let d = l as f64 - l_prime as f64 - alpha as f64 - a;
    geometric_sum(2.0 * PI * d / m as f64, m)
}

/// Per-path spreading weights `(F_q / M, G_q' / N)` indexed by the offsets `q`, `q'` that
/// appear in `x[(k - beta + q')_N, (l - alpha + q)_M]`.
pub(crate) fn spreading_weights(
    path: &PathSpec,
    m: usize,
    n: usize,
) -> (Vec<Complex64>, Vec<Complex64>) {
    (
        leakage_weights(path.frac_delay, m, 1.0),
        leakage_weights(path.frac_doppler, n, -1.0),
    )
}

/// `geometric_sum(sign * 2 pi (-q - frac) / count, count) / count` for `q < count`, with the
/// numerator hoisted and the denominators advanced by rotation.
fn leakage_weights(frac: f64, count: usize, sign: f64) -> Vec<Complex64> {
    let mut w = vec![Complex64::new(0.0, 0.0); count];
    if frac == 0.0 {
        w[0] = Complex64::new(1.0, 0.0);
        return w;
    }
    let c = count as f64;
    let num = Complex64::from_polar(1.0, -sign * 2.0 * PI * frac) - 1.0;
    let rot = Complex64::from_polar(1.0, -sign * 2.0 * PI / c);
    let mut e = Complex64::from_polar(1.0, -sign * 2.0 * PI * frac / c);
    for (q, slot) in w.iter_mut().enumerate() {
        let step = -sign * 2.0 * PI * (q as f64 + frac) / c;
        let wrapped = step - 2.0 * PI * (step / (2.0 * PI)).round();
        *slot = if wrapped.abs() < KERNEL_SINGULARITY_TOL {
            Complex64::new(1.0, 0.0)
        } else {
            num / (e - 1.0) / c
        };
        e *= rot;
    }
    w
}

/// Dense channel matrix for arbitrary (fractional) taps.
///
/// Row `k + N l`, column `(k - beta_i + q')_N + N (l - alpha_i + q)_M` accumulates
/// `h'_i * F_q / M * G_q' / N` over all paths and all `q < M`, `q' < N`. With zero fractional
/// parts the weights collapse to deltas and this equals [`build_h_integer`].
pub fn build_h_fractional(profile: &ChannelProfile) -> EffectiveChannel {
    let grid = *profile.grid();
    let (m, n) = (grid.m(), grid.n());
    let mn = grid.frame_size();
    let mut h = CMatrix::zeros(mn, mn);
    let data = h.as_mut_slice();
    for p in profile.paths() {
        let g = effective_gain(p, &grid);
        let (wf, wg) = spreading_weights(p, m, n);
        let beta = p.doppler_bin(n);
        for q in 0..m {
            for qd in 0..n {
                let w = g * wf[q] * wg[qd];
                if w.norm_sqr() == 0.0 {
                    continue;
                }
                let mut src_l = (m - p.delay_tap + q) % m;
                for l in 0..m {
                    let mut src_k = (n - beta + qd) % n;
                    for k in 0..n {
                        // Column-major: entry (row, col) lives at row + mn * col.
                        data[k + n * l + mn * (src_k + n * src_l)] += w;
                        src_k = if src_k + 1 == n { 0 } else { src_k + 1 };
                    }
                    src_l = if src_l + 1 == m { 0 } else { src_l + 1 };
                }
            }
        }
    }
    EffectiveChannel {
        matrix: h,
        profile: profile.clone(),
        kind: ChannelKind::Fractional,
    }
}

/// Integer builder when every path is on-grid, fractional builder otherwise.
pub fn build_h(profile: &ChannelProfile) -> Result<EffectiveChannel> {
    if profile.is_integer() {
        build_h_integer(profile)
    } else {
        Ok(build_h_fractional(profile))
    }
}

/// How a run places its paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileSpec {
    /// Four paths at delay/Doppler bins (0,0), (0,1), (1,0), (1,1).
    FourPath,
    /// One path on every one of the `MN` bins.
    FullGrid,
    /// Explicit integer `[alpha, beta]` bins with equal power.
    Taps { taps: Vec<[i64; 2]> },
    /// Path `i` at delay tap `i mod M`, power proportional to `exp(-decay * i)`, Jakes Doppler.
    ExponentialPdp {
        paths: usize,
        #[serde(default = "default_decay")]
        decay: f64,
        max_doppler_hz: f64,
        /// Add a uniform fractional delay in `(-1/2, 1/2]` to every path.
        #[serde(default)]
        fractional_delay: bool,
    },
}

fn default_decay() -> f64 {
    1.0
}

/// Path positions and powers without gains.
#[derive(Debug, Clone, PartialEq)]
pub struct TapGeometry {
    pub grid: OtfsGrid,
    pub positions: Vec<PathSpec>,
    pub powers: Vec<f64>,
}

impl TapGeometry {
    /// Bind gains drawn as `CN(0, power_i)`.
    pub fn draw_profile<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChannelProfile> {
        let gains = draw_gains(&self.powers, rng);
        let paths = self
            .positions
            .iter()
            .zip(gains)
            .map(|(p, g)| PathSpec { gain: g, ..*p })
            .collect();
        ChannelProfile::new(self.grid, paths)
    }

    /// Profile with unit gains; what rank analysis needs.
    pub fn unit_profile(&self) -> Result<ChannelProfile> {
        let paths = self
            .positions
            .iter()
            .map(|p| PathSpec {
                gain: Complex64::new(1.0, 0.0),
                ..*p
            })
            .collect();
        ChannelProfile::new(self.grid, paths)
    }
}

impl ProfileSpec {
    pub fn num_paths(&self, grid: &OtfsGrid) -> usize {
        match self {
            ProfileSpec::FourPath => 4,
            ProfileSpec::FullGrid => grid.frame_size(),
            ProfileSpec::Taps { taps } => taps.len(),
            ProfileSpec::ExponentialPdp { paths, .. } => *paths,
        }
    }

    /// True when the geometry is random and must be drawn per realization.
    pub fn is_random(&self) -> bool {
        matches!(self, ProfileSpec::ExponentialPdp { .. })
    }

    /// Draw a path geometry. `fractional` keeps fractional Doppler parts; otherwise Dopplers
    /// are rounded to the nearest bin.
    pub fn geometry<R: Rng + ?Sized>(
        &self,
        grid: &OtfsGrid,
        doppler_rng: &mut R,
        delay_rng: &mut R,
        fractional: bool,
    ) -> Result<TapGeometry> {
        let fixed = |taps: &[[i64; 2]]| -> Result<TapGeometry> {
            let p = taps.len();
            if p == 0 {
                return Err(OtfsError::config("empty tap list"));
            }
            let positions = taps
                .iter()
                .map(|&[a, b]| {
                    if a < 0 {
                        return Err(OtfsError::config(format!("negative delay tap {a}")));
                    }
                    Ok(PathSpec::integer(Complex64::new(0.0, 0.0), a as usize, b))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TapGeometry {
                grid: *grid,
                positions,
                powers: vec![1.0 / p as f64; p],
            })
        };
        let geometry = match self {
            ProfileSpec::FourPath => fixed(&[[0, 0], [0, 1], [1, 0], [1, 1]])?,
            ProfileSpec::FullGrid => {
                let taps: Vec<[i64; 2]> = (0..grid.m())
                    .flat_map(|a| (0..grid.n()).map(move |b| [a as i64, b as i64]))
                    .collect();
                fixed(&taps)?
            }
            ProfileSpec::Taps { taps } => fixed(taps)?,
            ProfileSpec::ExponentialPdp {
                paths,
                decay,
                max_doppler_hz,
                fractional_delay,
            } => {
                if *paths == 0 {
                    return Err(OtfsError::config("exponential profile needs paths >= 1"));
                }
                let mut powers: Vec<f64> = (0..*paths).map(|i| (-decay * i as f64).exp()).collect();
                let total: f64 = powers.iter().sum();
                powers.iter_mut().for_each(|p| *p /= total);
                let nus = draw_jakes_dopplers(*max_doppler_hz, *paths, doppler_rng);
                let positions = nus
                    .iter()
                    .enumerate()
                    .map(|(i, &nu)| {
                        let mut doppler_bins = nu / grid.doppler_resolution();
                        if !fractional {
                            doppler_bins = doppler_bins.round();
                        }
                        let alpha = i % grid.m();
                        let a = if *fractional_delay {
                            // (-1/2, 1/2]
                            0.5 - delay_rng.random::<f64>()
                        } else {
                            0.0
                        };
                        let (beta, b) = split_bins(doppler_bins);
                        PathSpec {
                            gain: Complex64::new(0.0, 0.0),
                            delay_tap: alpha,
                            doppler_tap: beta,
                            frac_delay: a,
                            frac_doppler: b,
                        }
                    })
                    .collect();
                TapGeometry {
                    grid: *grid,
                    positions,
                    powers,
                }
            }
        };
        // Validate bounds against the grid.
        geometry.unit_profile()?;
        Ok(geometry)
    }
}
