//! Rank and diversity reports.

use serde::Serialize;

use crate::analysis::{Certificate, PairWitness, RankReport};
use crate::error::{OtfsError, Result};
use crate::harness::config::ExperimentConfig;
use crate::mimo::mimo_min_rank;

/// Rank scan of the configured geometry. MIMO systems scale the minimum by `n_r`.
pub fn run_rank_analysis(cfg: &ExperimentConfig) -> Result<RankReport> {
    cfg.validate()?;
    let geometry = cfg
        .fixed_geometry()?
        .ok_or_else(|| OtfsError::config("rank analysis needs a fixed tap geometry"))?;
    let profile = geometry.unit_profile()?;
    let phi = cfg.phase_rotation()?;
    mimo_min_rank(
        &profile,
        &cfg.alphabet()?,
        cfg.antennas(),
        phi.as_ref(),
        &cfg.rank_options(),
    )
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    fingerprint: String,
    system: String,
    alphabet: &'a str,
    m: usize,
    n: usize,
    paths: usize,
    min_rank: usize,
    diversity_order: usize,
    diversity_multiplier: usize,
    kappa: String,
    kappa_ratio: String,
    pairs_examined: String,
    rel_tol: f64,
    certificate: Certificate,
    min_rank_witness: Option<&'a PairWitness>,
    witnesses: &'a [PairWitness],
}

/// Keyed-text (TOML) rendering of a report. Counts are strings since they may exceed `i64`.
pub fn rank_report_toml(cfg: &ExperimentConfig, report: &RankReport) -> Result<String> {
    let grid = cfg.grid()?;
    let frame = cfg.antennas().n_t * grid.frame_size();
    let doc = ReportDoc {
        fingerprint: cfg.fingerprint(),
        system: serde_json::to_value(cfg.system)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default(),
        alphabet: &cfg.alphabet,
        m: grid.m(),
        n: grid.n(),
        paths: cfg.profile.num_paths(&grid),
        min_rank: report.min_rank,
        diversity_order: report.diversity_order(),
        diversity_multiplier: report.diversity_multiplier,
        kappa: report.kappa.to_string(),
        kappa_ratio: format!("{}/2^{}", report.kappa, frame),
        pairs_examined: report.pairs_examined.to_string(),
        rel_tol: report.rel_tol,
        certificate: report.certificate,
        min_rank_witness: report.min_rank_witness.as_ref(),
        witnesses: &report.witnesses,
    };
    toml::to_string(&doc).map_err(|e| OtfsError::config(e.to_string()))
}
