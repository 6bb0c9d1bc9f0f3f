//! CSV and TOML sidecar output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{OtfsError, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::sweep::SweepResult;

pub const SWEEP_CSV_HEADER: &str = "snr_db,frames,bit_errors,ber,seed";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub snr_db: f64,
    pub frames: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub seed: u64,
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in &result.points {
        w.serialize(CsvRow {
            snr_db: p.snr_db,
            frames: p.frames,
            bit_errors: p.bit_errors,
            ber: p.ber,
            seed: p.seed,
        })
        .expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}

/// Parse a sweep CSV back into rows.
pub fn parse_sweep_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| OtfsError::config(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != SWEEP_CSV_HEADER {
        return Err(OtfsError::config("unexpected sweep CSV header"));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| OtfsError::config(format!("malformed sweep CSV: {e}"))))
        .collect()
}

#[derive(Serialize)]
struct SidecarPoint {
    snr_db: f64,
    frames: u64,
    bit_errors: u64,
    ber: f64,
    seed: String,
    wall_time_s: f64,
    pseudo_inverse_frames: u64,
    isi_frames: u64,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    fingerprint: &'a str,
    base_seed: String,
    bits_per_frame: u64,
    workers: usize,
    crate_version: &'static str,
    points: Vec<SidecarPoint>,
    config: &'a ExperimentConfig,
}

/// Run metadata: fingerprint, seeds (as strings, since TOML integers are signed), timing and
/// the full resolved config.
pub fn sweep_sidecar(result: &SweepResult) -> Result<String> {
    let sidecar = Sidecar {
        fingerprint: &result.fingerprint,
        base_seed: result.config.base_seed.to_string(),
        bits_per_frame: result.bits_per_frame,
        workers: result.workers,
        crate_version: env!("CARGO_PKG_VERSION"),
        points: result
            .points
            .iter()
            .map(|p| SidecarPoint {
                snr_db: p.snr_db,
                frames: p.frames,
                bit_errors: p.bit_errors,
                ber: p.ber,
                seed: p.seed.to_string(),
                wall_time_s: p.wall_time_s,
                pseudo_inverse_frames: p.pseudo_inverse_frames,
                isi_frames: p.isi_frames,
            })
            .collect(),
        config: &result.config,
    };
    toml::to_string(&sidecar).map_err(|e| OtfsError::config(e.to_string()))
}

/// Sidecar path for a CSV: `x.csv` becomes `x.toml`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("toml")
}

/// Write `csv` and its sidecar.
pub fn write_sweep(result: &SweepResult, csv: &Path) -> Result<()> {
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(csv, sweep_csv(result))?;
    fs::write(sidecar_path(csv), sweep_sidecar(result)?)?;
    Ok(())
}
