//! MIMO-OTFS: stacked channel, per-antenna phase rotation and rank analysis.
//!
//! Transmit antenna `k` sends frame `x_k`, receive antenna `l` sees
//! `y_l = sum_k H_lk x_k + v_l`. Stacking gives `y = H x + v` with `H` of shape
//! `n_r MN x n_t MN` whose block `(l, k)` is `H_lk`. All antenna pairs share the path
//! geometry; only the gains differ.

use serde::{Deserialize, Serialize};

use crate::analysis::{enumerate_rank_one_pairs, RankReport, RankScanOptions};
use crate::channel::{build_h, ChannelProfile};
use crate::error::{OtfsError, Result};
use crate::grid::Alphabet;
use crate::modem::PhaseRotation;
use crate::{CMatrix, CVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MimoConfig {
    pub n_t: usize,
    pub n_r: usize,
}

impl MimoConfig {
    pub fn new(n_t: usize, n_r: usize) -> Result<Self> {
        let cfg = MimoConfig { n_t, n_r };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.n_r == 0 {
            return Err(OtfsError::config(format!(
                "antenna counts must be >= 1, got n_t={}, n_r={}",
                self.n_t, self.n_r
            )));
        }
        Ok(())
    }

    pub fn links(&self) -> usize {
        self.n_t * self.n_r
    }
}

impl Default for MimoConfig {
    fn default() -> Self {
        MimoConfig { n_t: 1, n_r: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct MimoChannel {
    matrix: CMatrix,
    /// Profile of pair `(l, k)` at `l * n_t + k`.
    profiles: Vec<ChannelProfile>,
    cfg: MimoConfig,
}

impl MimoChannel {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn profile(&self, rx: usize, tx: usize) -> &ChannelProfile {
        &self.profiles[rx * self.cfg.n_t + tx]
    }

    pub fn config(&self) -> MimoConfig {
        self.cfg
    }
}

/// Stack per-pair channel matrices. `profiles[l * n_t + k]` is the link from transmit
/// antenna `k` to receive antenna `l`.
pub fn build_h_mimo(profiles: &[ChannelProfile], cfg: MimoConfig) -> Result<MimoChannel> {
    cfg.validate()?;
    if profiles.len() != cfg.links() {
        return Err(OtfsError::LengthMismatch {
            expected: cfg.links(),
            got: profiles.len(),
        });
    }
    let first = &profiles[0];
    if let Some(bad) = profiles.iter().position(|p| !p.same_geometry(first)) {
        return Err(OtfsError::config(format!(
            "antenna link {bad} does not share the path geometry of link 0"
        )));
    }
    let mn = first.grid().frame_size();
    let mut matrix = CMatrix::zeros(cfg.n_r * mn, cfg.n_t * mn);
    for l in 0..cfg.n_r {
        for k in 0..cfg.n_t {
            let h = build_h(&profiles[l * cfg.n_t + k])?;
            matrix
                .view_mut((l * mn, k * mn), (mn, mn))
                .copy_from(h.matrix());
        }
    }
    Ok(MimoChannel {
        matrix,
        profiles: profiles.to_vec(),
        cfg,
    })
}

fn rotate_segments(
    x: &[num_complex::Complex64],
    phi: &PhaseRotation,
    n_t: usize,
    conj: bool,
) -> Result<CVector> {
    let mn = phi.len();
    if x.len() != n_t * mn {
        return Err(OtfsError::LengthMismatch {
            expected: n_t * mn,
            got: x.len(),
        });
    }
    Ok(CVector::from_iterator(
        x.len(),
        x.iter().enumerate().map(|(i, v)| {
            let p = phi.entries()[i % mn];
            if conj {
                v * p.conj()
            } else {
                v * p
            }
        }),
    ))
}

/// Apply `I_{n_t} (x) Phi`: the same rotation on every antenna's frame.
pub fn mimo_phase_rotate(
    x: &[num_complex::Complex64],
    phi: &PhaseRotation,
    n_t: usize,
) -> Result<CVector> {
    rotate_segments(x, phi, n_t, false)
}

pub fn mimo_derotate(
    x: &[num_complex::Complex64],
    phi: &PhaseRotation,
    n_t: usize,
) -> Result<CVector> {
    rotate_segments(x, phi, n_t, true)
}

/// Rank analysis of the shared geometry, scaled by the receive-antenna count.
///
/// Every transmit antenna sees the same symbol-matrix map, so the minimum rank over joint
/// pairs equals the single-antenna minimum (attained by pairs differing on one antenna).
/// The reported diversity order is `n_r` times that minimum.
pub fn mimo_min_rank(
    geometry: &ChannelProfile,
    alphabet: &Alphabet,
    cfg: MimoConfig,
    phi: Option<&PhaseRotation>,
    opts: &RankScanOptions,
) -> Result<RankReport> {
    cfg.validate()?;
    let mut report = enumerate_rank_one_pairs(geometry, alphabet, phi, opts)?;
    report.diversity_multiplier = cfg.n_r;
    Ok(report)
}
