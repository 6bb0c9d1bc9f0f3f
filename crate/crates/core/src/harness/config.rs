//! Experiment configuration, read from TOML.
//!
//! ```toml
//! system = "otfs"
//! alphabet = "bpsk"
//! detector = "ml"
//! snr_db = [0, 5, 10, 15, 20]
//! base_seed = 7
//!
//! [grid]
//! m = 2
//! n = 2
//! delta_f_hz = 3750
//!
//! [profile]
//! kind = "four-path"
//!
//! [stopping]
//! min_bit_errors = 200
//! max_frames = 10000000
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{RankScanOptions, ScanMode, DEFAULT_RANK_TOL};
use crate::channel::{ProfileSpec, TapGeometry};
use crate::detect::DEFAULT_ENUMERATION_CAP;
use crate::error::{check_cap, OtfsError, Result};
use crate::grid::{Alphabet, OtfsGrid};
use crate::harness::seeds::{point_seed, trial_rng, Stream};
use crate::mimo::MimoConfig;
use crate::modem::{default_phi, PhaseRotation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    Otfs,
    OtfsRotated,
    Ofdm,
    MimoOtfs,
    MimoOtfsRotated,
}

impl SystemKind {
    pub fn is_rotated(self) -> bool {
        matches!(self, SystemKind::OtfsRotated | SystemKind::MimoOtfsRotated)
    }

    pub fn is_mimo(self) -> bool {
        matches!(self, SystemKind::MimoOtfs | SystemKind::MimoOtfsRotated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    Ml,
    Mmse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub m: usize,
    pub n: usize,
    pub delta_f_hz: f64,
    #[serde(default)]
    pub carrier_hz: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<OtfsGrid> {
        Ok(OtfsGrid::new(self.m, self.n, self.delta_f_hz)?.with_carrier(self.carrier_hz))
    }
}

/// Per-SNR Monte Carlo stopping rule: stop once `min_bit_errors` errors and `min_frames`
/// frames are reached, or at `max_frames`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoppingRule {
    pub min_bit_errors: u64,
    pub max_frames: u64,
    pub min_frames: u64,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule {
            min_bit_errors: 200,
            max_frames: 10_000_000,
            min_frames: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PhiSpec {
    /// Exponent of entry `i` is `i / MN` radians.
    #[default]
    Default,
    /// Explicit exponents in radians, one per delay-Doppler bin.
    Exponents { values: Vec<f64> },
}

impl PhiSpec {
    pub fn build(&self, mn: usize) -> Result<PhaseRotation> {
        match self {
            PhiSpec::Default => default_phi(mn),
            PhiSpec::Exponents { values } => {
                if values.len() != mn {
                    return Err(OtfsError::config(format!(
                        "phi needs {mn} exponents, got {}",
                        values.len()
                    )));
                }
                PhaseRotation::from_exponents(values.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OfdmOptions {
    /// Cyclic prefix in samples; defaults to the largest delay tap of each realization.
    pub cp_len: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankOptions {
    pub mode: ScanMode,
    pub samples: usize,
    pub witness_limit: usize,
}

impl Default for RankOptions {
    fn default() -> Self {
        let d = RankScanOptions::default();
        RankOptions {
            mode: d.mode,
            samples: d.samples,
            witness_limit: d.witness_limit,
        }
    }
}

/// Second system of a paired comparison; every field not listed is shared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    pub system: SystemKind,
    #[serde(default)]
    pub detector: Option<DetectorKind>,
    #[serde(default = "default_targets")]
    pub target_ber: Vec<f64>,
}

fn default_targets() -> Vec<f64> {
    vec![1e-2, 1e-3]
}

fn default_alphabet() -> String {
    "bpsk".into()
}

fn default_detector() -> DetectorKind {
    DetectorKind::Ml
}

fn default_cap() -> u64 {
    DEFAULT_ENUMERATION_CAP
}

fn default_rank_tol() -> f64 {
    DEFAULT_RANK_TOL
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemKind,
    #[serde(default = "default_alphabet")]
    pub alphabet: String,
    #[serde(default = "default_detector")]
    pub detector: DetectorKind,
    pub snr_db: Vec<f64>,
    #[serde(default)]
    pub base_seed: u64,
    /// Keep fractional Doppler parts of randomly drawn paths instead of rounding to bins.
    #[serde(default)]
    pub fractional: bool,
    /// Draw new Dopplers every frame; otherwise one draw per run.
    #[serde(default = "yes")]
    pub redraw_doppler: bool,
    /// Skip the noise entirely.
    #[serde(default)]
    pub noiseless: bool,
    #[serde(default = "default_cap")]
    pub enumeration_cap: u64,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    pub grid: GridConfig,
    pub profile: ProfileSpec,
    #[serde(default)]
    pub stopping: StoppingRule,
    #[serde(default)]
    pub mimo: MimoConfig,
    #[serde(default)]
    pub phi: PhiSpec,
    #[serde(default)]
    pub ofdm: OfdmOptions,
    #[serde(default)]
    pub rank: RankOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSpec>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| OtfsError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| OtfsError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| OtfsError::config(e.to_string()))
    }

    /// SHA-256 over the canonical JSON encoding of every field, defaults included.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn grid(&self) -> Result<OtfsGrid> {
        self.grid.build()
    }

    pub fn alphabet(&self) -> Result<Alphabet> {
        Alphabet::by_name(&self.alphabet)
    }

    /// Antenna configuration in effect; single-antenna systems ignore the `[mimo]` table.
    pub fn antennas(&self) -> MimoConfig {
        if self.system.is_mimo() {
            self.mimo
        } else {
            MimoConfig::default()
        }
    }

    pub fn phase_rotation(&self) -> Result<Option<PhaseRotation>> {
        if !self.system.is_rotated() {
            return Ok(None);
        }
        Ok(Some(self.phi.build(self.grid()?.frame_size())?))
    }

    pub fn rank_options(&self) -> RankScanOptions {
        RankScanOptions {
            rel_tol: self.rank_tol,
            cap: self.enumeration_cap,
            mode: self.rank.mode,
            samples: self.rank.samples,
            seed: self.base_seed,
            witness_limit: self.rank.witness_limit,
        }
    }

    /// The path geometry when it is fixed by the profile; `None` for randomly drawn ones.
    pub fn fixed_geometry(&self) -> Result<Option<TapGeometry>> {
        if self.profile.is_random() {
            return Ok(None);
        }
        let mut a = trial_rng(point_seed(self.base_seed, 0), Stream::Doppler, 0);
        let mut b = trial_rng(point_seed(self.base_seed, 0), Stream::Delay, 0);
        Ok(Some(self.profile.geometry(
            &self.grid()?,
            &mut a,
            &mut b,
            self.fractional,
        )?))
    }

    /// Copy of this config running the comparison system.
    pub fn comparison(&self) -> Result<ExperimentConfig> {
        let spec = self
            .compare
            .as_ref()
            .ok_or_else(|| OtfsError::config("missing [compare] table"))?;
        let mut other = self.clone();
        other.system = spec.system;
        if let Some(d) = spec.detector {
            other.detector = d;
        }
        other.compare = None;
        other.validate()?;
        Ok(other)
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_empty() {
            return Err(OtfsError::config("snr_db must list at least one value"));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(OtfsError::config("snr_db values must be finite"));
        }
        if self.base_seed > i64::MAX as u64 {
            return Err(OtfsError::config(
                "base_seed must fit in a signed 64-bit integer",
            ));
        }
        let s = &self.stopping;
        if s.min_bit_errors == 0 || s.max_frames == 0 {
            return Err(OtfsError::config(
                "stopping rule needs min_bit_errors >= 1 and max_frames >= 1",
            ));
        }
        if s.min_frames > s.max_frames {
            return Err(OtfsError::config(
                "stopping.min_frames exceeds stopping.max_frames",
            ));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return Err(OtfsError::config("rank_tol must lie in (0, 1)"));
        }
        let grid = self.grid()?;
        let alphabet = self.alphabet()?;
        let ant = self.antennas();
        ant.validate()?;
        self.phase_rotation()?;
        // Draw one geometry to surface profile errors early.
        let mut a = trial_rng(point_seed(self.base_seed, 0), Stream::Doppler, 0);
        let mut b = trial_rng(point_seed(self.base_seed, 0), Stream::Delay, 0);
        let geometry = self
            .profile
            .geometry(&grid, &mut a, &mut b, self.fractional)?;
        match self.system {
            SystemKind::Ofdm => {
                if geometry.positions.iter().any(|p| p.frac_delay != 0.0) {
                    return Err(OtfsError::config("the OFDM baseline needs integer delays"));
                }
                if self.detector == DetectorKind::Ml {
                    check_cap(
                        "ML detection",
                        alphabet.len(),
                        grid.m(),
                        self.enumeration_cap,
                    )?;
                }
            }
            _ => {
                if self.detector == DetectorKind::Ml {
                    check_cap(
                        "ML detection",
                        alphabet.len(),
                        ant.n_t * grid.frame_size(),
                        self.enumeration_cap,
                    )?;
                }
            }
        }
        if let Some(c) = &self.compare {
            if c.target_ber.is_empty() || c.target_ber.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
                return Err(OtfsError::config(
                    "compare.target_ber must list values in (0, 1)",
                ));
            }
        }
        Ok(())
    }
}
