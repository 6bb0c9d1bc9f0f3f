//! Analytic BER bound curves.

use serde::Serialize;

use crate::analysis::{ber_lower_bound, ber_lower_bound_asymptotic, Certificate, UnionBound};
use crate::error::{OtfsError, Result};
use crate::harness::config::{ExperimentConfig, SystemKind};
use crate::harness::rank::run_rank_analysis;

pub const BOUNDS_CSV_HEADER: &str = "snr_db,lower,asymptotic_lower,union_upper";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub snr_db: f64,
    pub lower: f64,
    pub asymptotic_lower: f64,
    /// `None` when the union bound enumeration would exceed the cap.
    pub union_upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCurves {
    pub kappa: u128,
    pub certificate: Certificate,
    pub rows: Vec<BoundRow>,
}

impl BoundCurves {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("in-memory CSV write");
        }
        String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
    }
}

/// Lower, asymptotic lower and union upper bounds over the configured SNR list, with
/// `gamma = 10^(snr_db / 10)`. Single-antenna OTFS with a fixed geometry only.
pub fn run_bounds(cfg: &ExperimentConfig) -> Result<BoundCurves> {
    if !matches!(cfg.system, SystemKind::Otfs | SystemKind::OtfsRotated) {
        return Err(OtfsError::config(
            "bounds are defined for single-antenna OTFS systems",
        ));
    }
    let report = run_rank_analysis(cfg)?;
    let grid = cfg.grid()?;
    let (m, n) = (grid.m(), grid.n());
    let profile = cfg
        .fixed_geometry()?
        .ok_or_else(|| OtfsError::config("bounds need a fixed tap geometry"))?
        .unit_profile()?;
    let phi = cfg.phase_rotation()?;
    let union = match UnionBound::prepare(
        &profile,
        &cfg.alphabet()?,
        phi.as_ref(),
        cfg.rank_tol,
        cfg.enumeration_cap,
    ) {
        Ok(u) => Some(u),
        Err(OtfsError::CapExceeded { .. }) => {
            log::warn!("union bound skipped: difference classes exceed the enumeration cap");
            None
        }
        Err(e) => return Err(e),
    };
    let rows = cfg
        .snr_db
        .iter()
        .map(|&snr_db| {
            let gamma = 10f64.powf(snr_db / 10.0);
            BoundRow {
                snr_db,
                lower: ber_lower_bound(gamma, m, n, report.kappa),
                asymptotic_lower: ber_lower_bound_asymptotic(gamma, m, n, report.kappa),
                union_upper: union.as_ref().map(|u| u.evaluate(gamma)),
            }
        })
        .collect();
    Ok(BoundCurves {
        kappa: report.kappa,
        certificate: report.certificate,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(system: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(&format!(
            r#"
system = "{system}"
snr_db = [0, 10, 20, 30]
[grid]
m = 2
n = 2
delta_f_hz = 3750
[profile]
kind = "four-path"
"#
        ))
        .unwrap()
    }

    #[test]
    fn curves_match_point_calls() {
        let c = cfg("otfs");
        let b = run_bounds(&c).unwrap();
        assert_eq!(b.kappa, 8);
        for r in &b.rows {
            let g = 10f64.powf(r.snr_db / 10.0);
            assert_eq!(r.lower, ber_lower_bound(g, 2, 2, 8));
            let u = r.union_upper.unwrap();
            assert!(u >= r.lower);
        }
        let csv = b.to_csv();
        assert!(csv.starts_with("snr_db,lower,asymptotic_lower,union_upper\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn rotated_has_zero_lower_bound() {
        let b = run_bounds(&cfg("otfs-rotated")).unwrap();
        assert_eq!(b.kappa, 0);
        assert!(b
            .rows
            .iter()
            .all(|r| r.lower == 0.0 && r.asymptotic_lower == 0.0));
        assert!(run_bounds(&cfg("ofdm")).is_err());
    }
}
