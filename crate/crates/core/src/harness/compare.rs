//! Paired-system comparisons and SNR-gain extraction.

use serde::Serialize;

use crate::error::{OtfsError, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::sweep::{run_sweep_with_workers, workers_from_env, SweepResult};

pub const GAIN_CSV_HEADER: &str = "target_ber,snr_primary_db,snr_secondary_db,gain_db";

/// SNR at which a BER curve first falls to `target`, by linear interpolation of
/// `log10(BER)` against dB between the bracketing points. `None` if the curve never crosses.
pub fn snr_at_ber(curve: &[(f64, f64)], target: f64) -> Option<f64> {
    if !(target > 0.0) {
        return None;
    }
    let mut pts: Vec<(f64, f64)> = curve.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(&(s, b)) = pts.first() {
        if b <= target {
            return if b == target { Some(s) } else { None };
        }
    }
    for w in pts.windows(2) {
        let ((s0, b0), (s1, b1)) = (w[0], w[1]);
        if b0 > target && b1 <= target {
            if b1 <= 0.0 {
                // Zero-error point: no log-scale interpolation possible.
                return Some(s1);
            }
            let (l0, l1, lt) = (b0.log10(), b1.log10(), target.log10());
            return Some(s0 + (s1 - s0) * (l0 - lt) / (l0 - l1));
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainRow {
    pub target_ber: f64,
    pub snr_primary_db: Option<f64>,
    pub snr_secondary_db: Option<f64>,
    /// `snr_secondary - snr_primary`: positive when the primary system needs less SNR.
    pub gain_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub primary: SweepResult,
    pub secondary: SweepResult,
    pub gains: Vec<GainRow>,
}

impl Comparison {
    pub fn gain_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for g in &self.gains {
            w.serialize(g).expect("in-memory CSV write");
        }
        String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
    }
}

pub fn gain_table(primary: &SweepResult, secondary: &SweepResult, targets: &[f64]) -> Vec<GainRow> {
    targets
        .iter()
        .map(|&t| {
            let a = snr_at_ber(&primary.curve(), t);
            let b = snr_at_ber(&secondary.curve(), t);
            GainRow {
                target_ber: t,
                snr_primary_db: a,
                snr_secondary_db: b,
                gain_db: a.zip(b).map(|(a, b)| b - a),
            }
        })
        .collect()
}

/// Run the config and its `[compare]` counterpart on the same seeds, so trial `t` of both
/// systems sees the same channel, data and noise draws.
pub fn run_compare(cfg: &ExperimentConfig) -> Result<Comparison> {
    let spec = cfg
        .compare
        .as_ref()
        .ok_or_else(|| OtfsError::config("compare needs a [compare] table"))?;
    let other = cfg.comparison()?;
    let workers = workers_from_env()?;
    let primary = run_sweep_with_workers(cfg, workers)?;
    let secondary = run_sweep_with_workers(&other, workers)?;
    let gains = gain_table(&primary, &secondary, &spec.target_ber);
    Ok(Comparison {
        primary,
        secondary,
        gains,
    })
}
