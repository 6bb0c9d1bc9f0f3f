//! Discrete OTFS transmit/receive chain under ideal bi-orthogonal pulses.
//!
//! The transforms are normalized so that `sfft(wigner(heisenberg(isfft(x)))) == x`:
//!
//! * `isfft`: `X[n,m] = 1/(MN) sum_{k,l} x[k,l] e^{j2pi(nk/N - ml/M)}`
//! * `sfft`: `x[k,l] = sum_{n,m} X[n,m] e^{-j2pi(nk/N - ml/M)}`
//! * `heisenberg`: `s[nM + p] = sum_m X[n,m] e^{j2pi mp/M}`
//! * `wigner`: `X[n,m] = 1/M sum_p s[nM + p] e^{-j2pi mp/M}`

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::channel::ChannelProfile;
use crate::error::{OtfsError, Result};
use crate::grid::{DDFrame, OtfsGrid};
use crate::CVector;

/// Time-frequency samples `X[n, m]`, stored at `n*M + m`.
#[derive(Debug, Clone, PartialEq)]
pub struct TfGrid {
    grid: OtfsGrid,
    data: Vec<Complex64>,
}

impl TfGrid {
    pub fn zeros(grid: OtfsGrid) -> Self {
        TfGrid {
            grid,
            data: vec![Complex64::new(0.0, 0.0); grid.frame_size()],
        }
    }

    pub fn from_vec(grid: OtfsGrid, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.frame_size() {
            return Err(OtfsError::LengthMismatch {
                expected: grid.frame_size(),
                got: data.len(),
            });
        }
        Ok(TfGrid { grid, data })
    }

    pub fn grid(&self) -> &OtfsGrid {
        &self.grid
    }

    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        self.data[n * self.grid.m() + m]
    }

    pub fn set(&mut self, n: usize, m: usize, v: Complex64) {
        let i = n * self.grid.m() + m;
        self.data[i] = v;
    }

    /// Samples of time slot `n` across all subcarriers.
    pub fn symbol(&self, n: usize) -> &[Complex64] {
        let m = self.grid.m();
        &self.data[n * m..(n + 1) * m]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }
}

/// Baseband samples of one frame at rate `M * delta_f`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFrame {
    samples: Vec<Complex64>,
}

impl TimeFrame {
    pub fn new(samples: Vec<Complex64>) -> Self {
        TimeFrame { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }
}

struct Plans {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn plans(len: usize) -> Plans {
    let mut planner = FftPlanner::new();
    Plans {
        fwd: planner.plan_fft_forward(len),
        inv: planner.plan_fft_inverse(len),
    }
}

/// Apply `fft` to the strided sequence `buf[offset + i*stride]`, `i < len`.
fn strided(
    buf: &mut [Complex64],
    offset: usize,
    stride: usize,
    len: usize,
    fft: &dyn Fft<f64>,
    scratch: &mut Vec<Complex64>,
) {
    scratch.clear();
    scratch.extend((0..len).map(|i| buf[offset + i * stride]));
    fft.process(scratch);
    for (i, v) in scratch.iter().enumerate() {
        buf[offset + i * stride] = *v;
    }
}

/// Inverse symplectic finite Fourier transform.
pub fn isfft(dd: &DDFrame) -> TfGrid {
    let grid = *dd.grid();
    let (m, n) = (grid.m(), grid.n());
    // Work on a [k + N l] buffer: inverse DFT along k (n index), forward along l (m index).
    let mut buf = dd.as_slice().to_vec();
    let (pn, pm) = (plans(n), plans(m));
    let mut scratch = Vec::new();
    for l in 0..m {
        strided(&mut buf, l * n, 1, n, pn.inv.as_ref(), &mut scratch);
    }
    for k in 0..n {
        strided(&mut buf, k, n, m, pm.fwd.as_ref(), &mut scratch);
    }
    let scale = 1.0 / (m * n) as f64;
    let mut tf = TfGrid::zeros(grid);
    for l in 0..m {
        for k in 0..n {
            // buf now holds X[n = k, m = l] at k + N l.
            tf.set(k, l, buf[k + n * l] * scale);
        }
    }
    tf
}

/// Symplectic finite Fourier transform; the exact inverse of [`isfft`].
pub fn sfft(tf: &TfGrid) -> DDFrame {
    let grid = *tf.grid();
    let (m, n) = (grid.m(), grid.n());
    let mut buf: Vec<Complex64> = (0..m * n)
        .map(|i| {
            let (k, l) = grid.coords(i);
            tf.get(k, l)
        })
        .collect();
    let (pn, pm) = (plans(n), plans(m));
    let mut scratch = Vec::new();
    for l in 0..m {
        strided(&mut buf, l * n, 1, n, pn.fwd.as_ref(), &mut scratch);
    }
    for k in 0..n {
        strided(&mut buf, k, n, m, pm.inv.as_ref(), &mut scratch);
    }
    DDFrame::devectorize(grid, &buf).expect("frame size matches grid")
}

/// Per-symbol inverse DFT across subcarriers, symbols concatenated in time.
pub fn heisenberg(tf: &TfGrid) -> TimeFrame {
    let m = tf.grid().m();
    let mut samples = tf.as_slice().to_vec();
    let p = plans(m);
    for chunk in samples.chunks_mut(m) {
        p.inv.process(chunk);
    }
    TimeFrame::new(samples)
}

/// Matched-filter sampling; the exact inverse of [`heisenberg`].
pub fn wigner(s: &TimeFrame, grid: &OtfsGrid) -> Result<TfGrid> {
    if s.len() != grid.frame_size() {
        return Err(OtfsError::LengthMismatch {
            expected: grid.frame_size(),
            got: s.len(),
        });
    }
    let m = grid.m();
    let mut data = s.as_slice().to_vec();
    let p = plans(m);
    let scale = 1.0 / m as f64;
    for chunk in data.chunks_mut(m) {
        p.fwd.process(chunk);
        chunk.iter_mut().for_each(|v| *v *= scale);
    }
    TfGrid::from_vec(*grid, data)
}

/// `heisenberg(isfft(x))`.
pub fn otfs_modulate(x: &DDFrame) -> TimeFrame {
    heisenberg(&isfft(x))
}

/// `sfft(wigner(r))`.
pub fn otfs_demodulate(r: &TimeFrame, grid: &OtfsGrid) -> Result<DDFrame> {
    Ok(sfft(&wigner(r, grid)?))
}

/// How the time-domain channel treats symbol boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PulseModel {
    /// Ideal bi-orthogonal pulses: each `M`-sample symbol is delayed cyclically within
    /// itself and sees a Doppler phase that is constant over the symbol,
    /// `r[nM + p] = sum_i h_i e^{j2pi beta_i (nM - alpha_i)/(MN)} s[nM + (p - alpha_i)_M]`.
    /// This reproduces the delay-Doppler matrix model exactly.
    #[default]
    Ideal,
    /// Whole-frame cyclic delay with a continuous Doppler ramp,
    /// `r[t] = sum_i h_i s[(t - alpha_i)_{MN}] e^{j2pi beta_i (t - alpha_i)/(MN)}`.
    /// Rectangular pulses leak across symbols, so this deviates from the matrix model.
    FrameCyclic,
}

/// Pass a time frame through an integer-tap channel with ideal pulses.
pub fn apply_td_channel(s: &TimeFrame, profile: &ChannelProfile) -> Result<TimeFrame> {
    apply_td_channel_with(s, profile, PulseModel::Ideal)
}

pub fn apply_td_channel_with(
    s: &TimeFrame,
    profile: &ChannelProfile,
    pulse: PulseModel,
) -> Result<TimeFrame> {
    if !profile.is_integer() {
        return Err(OtfsError::Unsupported(
            "time-domain channel needs integer taps; use build_h_fractional for fractional paths"
                .into(),
        ));
    }
    let grid = profile.grid();
    let (m, n) = (grid.m(), grid.n());
    let mn = m * n;
    if s.len() != mn {
        return Err(OtfsError::LengthMismatch {
            expected: mn,
            got: s.len(),
        });
    }
    let x = s.as_slice();
    let mut out = vec![Complex64::new(0.0, 0.0); mn];
    for path in profile.paths() {
        let alpha = path.delay_tap as i64;
        let beta = path.doppler_tap as f64;
        match pulse {
            PulseModel::Ideal => {
                for sym in 0..n {
                    let phase = 2.0 * PI * beta * ((sym * m) as f64 - alpha as f64) / mn as f64;
                    let g = path.gain * Complex64::from_polar(1.0, phase);
                    for p in 0..m {
                        let src = (p as i64 - alpha).rem_euclid(m as i64) as usize;
                        out[sym * m + p] += g * x[sym * m + src];
                    }
                }
            }
            PulseModel::FrameCyclic => {
                for (t, o) in out.iter_mut().enumerate() {
                    let src = (t as i64 - alpha).rem_euclid(mn as i64) as usize;
                    let phase = 2.0 * PI * beta * (t as f64 - alpha as f64) / mn as f64;
                    *o += path.gain * Complex64::from_polar(1.0, phase) * x[src];
                }
            }
        }
    }
    Ok(TimeFrame::new(out))
}

/// Add i.i.d. `CN(0, n0)` samples in place. `n0 == 0` leaves `v` untouched.
pub fn add_awgn<R: Rng + ?Sized>(v: &mut [Complex64], n0: f64, rng: &mut R) {
    if n0 <= 0.0 {
        return;
    }
    let s = (n0 / 2.0).sqrt();
    for x in v.iter_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *x += Complex64::new(s * re, s * im);
    }
}

/// [`add_awgn`] with a dedicated generator seeded from `seed`.
pub fn add_awgn_seeded(v: &mut [Complex64], n0: f64, seed: u64) {
    add_awgn(v, n0, &mut ChaCha8Rng::seed_from_u64(seed));
}

/// Diagonal unit-modulus precoder `diag(e^{j a_0}, ..., e^{j a_{MN-1}})`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRotation {
    exponents: Vec<f64>,
    entries: Vec<Complex64>,
}

impl PhaseRotation {
    /// Rotation with the given exponents in radians. Exponents must be finite and pairwise
    /// distinct.
    pub fn from_exponents(exponents: Vec<f64>) -> Result<Self> {
        if exponents.is_empty() {
            return Err(OtfsError::config(
                "phase rotation needs at least one exponent",
            ));
        }
        if exponents.iter().any(|a| !a.is_finite()) {
            return Err(OtfsError::config("phase exponents must be finite"));
        }
        let mut sorted = exponents.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(OtfsError::config(
                "phase exponents must be pairwise distinct",
            ));
        }
        let entries = exponents
            .iter()
            .map(|&a| Complex64::from_polar(1.0, a))
            .collect();
        Ok(PhaseRotation { exponents, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }
}

/// Exponent of entry `i` is `i / MN` radians.
pub fn default_phi(mn: usize) -> Result<PhaseRotation> {
    if mn == 0 {
        return Err(OtfsError::config("phase rotation length must be >= 1"));
    }
    PhaseRotation::from_exponents((0..mn).map(|i| i as f64 / mn as f64).collect())
}

fn check_len(x: &[Complex64], phi: &PhaseRotation) -> Result<()> {
    if x.len() != phi.len() {
        return Err(OtfsError::LengthMismatch {
            expected: phi.len(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Elementwise multiply by the rotation.
pub fn phase_rotate(x: &[Complex64], phi: &PhaseRotation) -> Result<CVector> {
    check_len(x, phi)?;
    Ok(CVector::from_iterator(
        x.len(),
        x.iter().zip(phi.entries()).map(|(a, p)| a * p),
    ))
}

/// Elementwise divide by the rotation.
pub fn derotate(x: &[Complex64], phi: &PhaseRotation) -> Result<CVector> {
    check_len(x, phi)?;
    Ok(CVector::from_iterator(
        x.len(),
        x.iter().zip(phi.entries()).map(|(a, p)| a * p.conj()),
    ))
}
