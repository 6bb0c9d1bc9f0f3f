//! CP-OFDM reference system over the same doubly-dispersive channel.
//!
//! Each of the `N` symbols carries `M` subcarriers through a unitary inverse DFT and a
//! cyclic prefix of `cp_len` samples. The channel acts linearly on the whole frame with
//! Doppler ramps running continuously across symbols, so Doppler causes inter-carrier
//! interference. Detection is per symbol on the exact `M x M` frequency-domain matrix.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelProfile;
use crate::detect::{ml_detect, mmse_detect, DetectionResult};
use crate::error::{OtfsError, Result};
use crate::grid::{Alphabet, OtfsGrid};
use crate::modem::{TfGrid, TimeFrame};
use crate::{CMatrix, CVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfdmConfig {
    pub grid: OtfsGrid,
    pub cp_len: usize,
}

impl OfdmConfig {
    pub fn new(grid: OtfsGrid, cp_len: usize) -> Self {
        OfdmConfig { grid, cp_len }
    }

    /// CP equal to the largest delay tap of `profile`.
    pub fn for_profile(profile: &ChannelProfile) -> Self {
        let cp = profile
            .paths()
            .iter()
            .map(|p| p.delay_tap)
            .max()
            .unwrap_or(0);
        OfdmConfig::new(*profile.grid(), cp)
    }

    pub fn symbol_len(&self) -> usize {
        self.grid.m() + self.cp_len
    }

    pub fn frame_len(&self) -> usize {
        self.grid.n() * self.symbol_len()
    }
}

/// Per-symbol unitary inverse DFT with cyclic prefix.
pub fn ofdm_modulate(tf: &TfGrid, cfg: &OfdmConfig) -> Result<TimeFrame> {
    let m = cfg.grid.m();
    if tf.grid().frame_size() != cfg.grid.frame_size() || tf.grid().m() != m {
        return Err(OtfsError::LengthMismatch {
            expected: cfg.grid.frame_size(),
            got: tf.grid().frame_size(),
        });
    }
    let ifft = FftPlanner::new().plan_fft_inverse(m);
    let scale = 1.0 / (m as f64).sqrt();
    let mut out = Vec::with_capacity(cfg.frame_len());
    for n in 0..cfg.grid.n() {
        let mut sym: Vec<Complex64> = tf.symbol(n).iter().map(|v| v * scale).collect();
        ifft.process(&mut sym);
        let cp = cfg.cp_len as i64;
        out.extend((0..cp).map(|i| sym[(i - cp).rem_euclid(m as i64) as usize]));
        out.extend_from_slice(&sym);
    }
    Ok(TimeFrame::new(out))
}

/// Drop prefixes and apply the unitary DFT per symbol.
pub fn ofdm_demodulate(s: &TimeFrame, cfg: &OfdmConfig) -> Result<TfGrid> {
    if s.len() != cfg.frame_len() {
        return Err(OtfsError::LengthMismatch {
            expected: cfg.frame_len(),
            got: s.len(),
        });
    }
    let m = cfg.grid.m();
    let fft = FftPlanner::new().plan_fft_forward(m);
    let scale = 1.0 / (m as f64).sqrt();
    let mut data = Vec::with_capacity(cfg.grid.frame_size());
    for chunk in s.as_slice().chunks(cfg.symbol_len()) {
        let mut sym = chunk[cfg.cp_len..].to_vec();
        fft.process(&mut sym);
        data.extend(sym.into_iter().map(|v| v * scale));
    }
    TfGrid::from_vec(cfg.grid, data)
}

/// Received frame plus a flag raised when some path is longer than the prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmChannelOutput {
    pub frame: TimeFrame,
    pub isi: bool,
}

fn require_integer_delay(profile: &ChannelProfile) -> Result<()> {
    if profile.paths().iter().any(|p| p.frac_delay != 0.0) {
        return Err(OtfsError::Unsupported(
            "OFDM baseline needs integer sample delays".into(),
        ));
    }
    Ok(())
}

/// Doppler phase step per sample, `2 pi (beta + b) / (MN)`.
fn phase_step(path: &crate::channel::PathSpec, grid: &OtfsGrid) -> f64 {
    2.0 * PI * (path.doppler_tap as f64 + path.frac_doppler) / grid.frame_size() as f64
}

/// `r[t] = sum_i h_i s[t - d_i] e^{j 2 pi nu_i (t - d_i) T_s}` over the whole frame; samples
/// before the frame start are zero.
pub fn ofdm_apply_channel(
    s: &TimeFrame,
    profile: &ChannelProfile,
    cfg: &OfdmConfig,
) -> Result<OfdmChannelOutput> {
    require_integer_delay(profile)?;
    if s.len() != cfg.frame_len() {
        return Err(OtfsError::LengthMismatch {
            expected: cfg.frame_len(),
            got: s.len(),
        });
    }
    let x = s.as_slice();
    let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
    let mut isi = false;
    for path in profile.paths() {
        let d = path.delay_tap;
        isi |= d > cfg.cp_len;
        let step = phase_step(path, profile.grid());
        for t in d..x.len() {
            out[t] += path.gain * Complex64::from_polar(1.0, step * (t - d) as f64) * x[t - d];
        }
    }
    if isi {
        log::warn!("path delay exceeds the cyclic prefix; inter-symbol interference present");
    }
    Ok(OfdmChannelOutput {
        frame: TimeFrame::new(out),
        isi,
    })
}

/// Frequency-domain matrices `G_n` with `Y_n = G_n X_n` for every symbol `n`, valid when no
/// delay exceeds the prefix. Longer paths are folded in as if the prefix covered them, so
/// their inter-symbol interference is left to act as extra noise.
pub fn ofdm_symbol_matrices(profile: &ChannelProfile, cfg: &OfdmConfig) -> Result<Vec<CMatrix>> {
    require_integer_delay(profile)?;
    let m = cfg.grid.m();
    let fft = FftPlanner::new().plan_fft_forward(m);
    let scale = 1.0 / m as f64;
    let mut out = Vec::with_capacity(cfg.grid.n());
    for n in 0..cfg.grid.n() {
        // Time-domain action on the CP-stripped symbol, then conjugate by the DFT.
        let start = n * cfg.symbol_len() + cfg.cp_len;
        let mut t = CMatrix::zeros(m, m);
        for path in profile.paths() {
            let d = path.delay_tap;
            let step = phase_step(path, profile.grid());
            for p in 0..m {
                let abs = start + p;
                if abs < d {
                    continue;
                }
                let col = (p + m - d % m) % m;
                t[(p, col)] += path.gain * Complex64::from_polar(1.0, step * (abs - d) as f64);
            }
        }
        // G = F T F^H with unitary F: transform columns by F^H, then rows by F.
        let mut g = t;
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for r in 0..m {
            for c in 0..m {
                buf[c] = g[(r, c)].conj();
            }
            fft.process(&mut buf);
            for c in 0..m {
                g[(r, c)] = buf[c].conj();
            }
        }
        for c in 0..m {
            for r in 0..m {
                buf[r] = g[(r, c)];
            }
            fft.process(&mut buf);
            for r in 0..m {
                g[(r, c)] = buf[r] * scale;
            }
        }
        out.push(g);
    }
    Ok(out)
}

/// Detector applied per OFDM symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OfdmDetector {
    Mmse,
    Ml { cap: u64 },
}

/// Detect all symbols of a frame; the result lists subcarrier decisions symbol by symbol.
pub fn ofdm_detect(
    y: &TfGrid,
    matrices: &[CMatrix],
    n0: f64,
    alphabet: &Alphabet,
    detector: OfdmDetector,
) -> Result<DetectionResult> {
    let grid = y.grid();
    if matrices.len() != grid.n() {
        return Err(OtfsError::LengthMismatch {
            expected: grid.n(),
            got: matrices.len(),
        });
    }
    let mut indices = Vec::with_capacity(grid.frame_size());
    let mut pinv = false;
    for (n, g) in matrices.iter().enumerate() {
        let yn = CVector::from_column_slice(y.symbol(n));
        let r = match detector {
            OfdmDetector::Mmse => mmse_detect(&yn, g, n0, alphabet)?,
            OfdmDetector::Ml { cap } => ml_detect(&yn, g, alphabet, cap)?,
        };
        pinv |= r.pseudo_inverse;
        indices.extend(r.indices);
    }
    Ok(DetectionResult {
        symbols: alphabet.modulate(&indices),
        bits: alphabet.bits_from_indices(&indices),
        indices,
        metric: None,
        pseudo_inverse: pinv,
    })
}

/// Per-symbol MMSE detection.
pub fn ofdm_mmse_detect(
    y: &TfGrid,
    matrices: &[CMatrix],
    n0: f64,
    alphabet: &Alphabet,
) -> Result<DetectionResult> {
    ofdm_detect(y, matrices, n0, alphabet, OfdmDetector::Mmse)
}
