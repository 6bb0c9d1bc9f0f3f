//! Monte Carlo BER sweeps.

use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{build_h, ChannelProfile, TapGeometry};
use crate::detect::{count_bit_errors, ml_detect, mmse_detect, DetectionResult};
use crate::error::{OtfsError, Result};
use crate::grid::{Alphabet, OtfsGrid};
use crate::harness::config::{DetectorKind, ExperimentConfig, SystemKind};
use crate::harness::seeds::{point_seed, trial_rng, Stream};
use crate::mimo::{build_h_mimo, MimoConfig};
use crate::modem::{add_awgn, PhaseRotation, TfGrid};
use crate::ofdm::{
    ofdm_apply_channel, ofdm_demodulate, ofdm_detect, ofdm_modulate, ofdm_symbol_matrices,
    OfdmConfig, OfdmDetector,
};
use crate::{CMatrix, CVector};

/// Trials evaluated per parallel batch. Fixed so that results do not depend on the pool.
pub const BATCH: u64 = 256;

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "OTFS_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrialOutcome {
    pub bit_errors: u64,
    pub pseudo_inverse: bool,
    pub isi: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub frames: u64,
    pub bit_errors: u64,
    pub ber: f64,
    /// Seed every trial of this point is derived from.
    pub seed: u64,
    pub wall_time_s: f64,
    /// Frames where MMSE fell back to a pseudo-inverse.
    pub pseudo_inverse_frames: u64,
    /// OFDM frames whose delay spread exceeded the cyclic prefix.
    pub isi_frames: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub fingerprint: String,
    pub bits_per_frame: u64,
    pub workers: usize,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn curve(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.snr_db, p.ber)).collect()
    }
}

/// Pre-resolved pieces of a config needed to run trials.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: ExperimentConfig,
    grid: OtfsGrid,
    alphabet: Alphabet,
    antennas: MimoConfig,
    phi: Option<PhaseRotation>,
    static_geometry: Option<TapGeometry>,
}

impl Simulator {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        let static_geometry = if !cfg.profile.is_random() || !cfg.redraw_doppler {
            Some(geometry_for(cfg, &grid, point_seed(cfg.base_seed, 0), 0)?)
        } else {
            None
        };
        Ok(Simulator {
            grid,
            alphabet: cfg.alphabet()?,
            antennas: cfg.antennas(),
            phi: cfg.phase_rotation()?,
            static_geometry,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    /// Symbols carried by one frame across all transmit antennas.
    pub fn symbols_per_frame(&self) -> usize {
        self.antennas.n_t * self.grid.frame_size()
    }

    pub fn bits_per_frame(&self) -> u64 {
        (self.symbols_per_frame() * self.alphabet.bits_per_symbol()) as u64
    }

    pub fn noise_variance(&self, snr_db: f64) -> f64 {
        if self.cfg.noiseless {
            0.0
        } else {
            10f64.powf(-snr_db / 10.0)
        }
    }

    /// Channel geometry of one trial.
    pub fn geometry(&self, snr_index: usize, trial: u64) -> Result<TapGeometry> {
        match &self.static_geometry {
            Some(g) => Ok(g.clone()),
            None => geometry_for(
                &self.cfg,
                &self.grid,
                point_seed(self.cfg.base_seed, snr_index),
                trial,
            ),
        }
    }

    /// Channel realizations of one trial, one per antenna link in `rx * n_t + tx` order.
    pub fn profiles(&self, snr_index: usize, trial: u64) -> Result<Vec<ChannelProfile>> {
        let geometry = self.geometry(snr_index, trial)?;
        let mut rng = trial_rng(
            point_seed(self.cfg.base_seed, snr_index),
            Stream::Gains,
            trial,
        );
        (0..self.antennas.links())
            .map(|_| geometry.draw_profile(&mut rng))
            .collect()
    }

    pub fn data(&self, snr_index: usize, trial: u64) -> Vec<usize> {
        let mut rng = trial_rng(
            point_seed(self.cfg.base_seed, snr_index),
            Stream::Data,
            trial,
        );
        (0..self.symbols_per_frame())
            .map(|_| rng.random_range(0..self.alphabet.len()))
            .collect()
    }

    pub fn run_trial(&self, snr_index: usize, trial: u64) -> Result<TrialOutcome> {
        let snr_db = *self
            .cfg
            .snr_db
            .get(snr_index)
            .ok_or_else(|| OtfsError::config(format!("no SNR point {snr_index}")))?;
        let n0 = self.noise_variance(snr_db);
        let profiles = self.profiles(snr_index, trial)?;
        let indices = self.data(snr_index, trial);
        let mut noise_rng = trial_rng(
            point_seed(self.cfg.base_seed, snr_index),
            Stream::Noise,
            trial,
        );
        let (detected, isi) = match self.cfg.system {
            SystemKind::Ofdm => self.ofdm_trial(&profiles[0], &indices, n0, &mut noise_rng)?,
            _ => (
                self.otfs_trial(&profiles, &indices, n0, &mut noise_rng)?,
                false,
            ),
        };
        let truth = self.alphabet.bits_from_indices(&indices);
        Ok(TrialOutcome {
            bit_errors: count_bit_errors(&truth, &detected.bits)?,
            pseudo_inverse: detected.pseudo_inverse,
            isi,
        })
    }

    fn otfs_trial<R: Rng>(
        &self,
        profiles: &[ChannelProfile],
        indices: &[usize],
        n0: f64,
        noise_rng: &mut R,
    ) -> Result<DetectionResult> {
        let mut h: CMatrix = if self.cfg.system.is_mimo() {
            build_h_mimo(profiles, self.antennas)?.into_matrix()
        } else {
            build_h(&profiles[0])?.into_matrix()
        };
        if let Some(phi) = &self.phi {
            // Fold the rotation into the channel: H diag(I (x) phi).
            let mn = phi.len();
            for (c, mut col) in h.column_iter_mut().enumerate() {
                col *= phi.entries()[c % mn];
            }
        }
        let x = self.alphabet.modulate(indices);
        let mut y: CVector = &h * x;
        if n0 > 0.0 {
            add_awgn(y.as_mut_slice(), n0, noise_rng);
        }
        match self.cfg.detector {
            DetectorKind::Ml => ml_detect(&y, &h, &self.alphabet, self.cfg.enumeration_cap),
            DetectorKind::Mmse => mmse_detect(&y, &h, n0, &self.alphabet),
        }
    }

    fn ofdm_trial<R: Rng>(
        &self,
        profile: &ChannelProfile,
        indices: &[usize],
        n0: f64,
        noise_rng: &mut R,
    ) -> Result<(DetectionResult, bool)> {
        let ofdm = match self.cfg.ofdm.cp_len {
            Some(cp) => OfdmConfig::new(self.grid, cp),
            None => OfdmConfig::for_profile(profile),
        };
        let x: Vec<Complex64> = self.alphabet.modulate(indices).iter().copied().collect();
        let tf = TfGrid::from_vec(self.grid, x)?;
        let s = ofdm_modulate(&tf, &ofdm)?;
        let mut out = ofdm_apply_channel(&s, profile, &ofdm)?;
        if n0 > 0.0 {
            add_awgn(out.frame.as_mut_slice(), n0, noise_rng);
        }
        let y = ofdm_demodulate(&out.frame, &ofdm)?;
        let matrices = ofdm_symbol_matrices(profile, &ofdm)?;
        let detector = match self.cfg.detector {
            DetectorKind::Ml => OfdmDetector::Ml {
                cap: self.cfg.enumeration_cap,
            },
            DetectorKind::Mmse => OfdmDetector::Mmse,
        };
        Ok((
            ofdm_detect(&y, &matrices, n0, &self.alphabet, detector)?,
            out.isi,
        ))
    }

    /// Run one SNR point until the stopping rule fires.
    ///
    /// Trials are evaluated in fixed batches and then scanned in index order, so the stop
    /// position and every count are independent of the worker count.
    pub fn run_point(&self, snr_index: usize) -> Result<SweepPoint> {
        let start = Instant::now();
        let rule = self.cfg.stopping;
        let bits = self.bits_per_frame();
        let (mut frames, mut errors, mut pinv, mut isi) = (0u64, 0u64, 0u64, 0u64);
        'outer: while frames < rule.max_frames {
            let count = BATCH.min(rule.max_frames - frames);
            let outcomes = (frames..frames + count)
                .into_par_iter()
                .map(|t| self.run_trial(snr_index, t))
                .collect::<Result<Vec<_>>>()?;
            for o in outcomes {
                frames += 1;
                errors += o.bit_errors;
                pinv += o.pseudo_inverse as u64;
                isi += o.isi as u64;
                if errors >= rule.min_bit_errors && frames >= rule.min_frames {
                    break 'outer;
                }
            }
        }
        if pinv > 0 {
            log::warn!(
                "{pinv} frames at {} dB used a pseudo-inverse",
                self.cfg.snr_db[snr_index]
            );
        }
        if isi > 0 {
            log::warn!(
                "{isi} OFDM frames at {} dB had delay spread beyond the cyclic prefix",
                self.cfg.snr_db[snr_index]
            );
        }
        Ok(SweepPoint {
            snr_db: self.cfg.snr_db[snr_index],
            frames,
            bit_errors: errors,
            ber: errors as f64 / (frames * bits) as f64,
            seed: point_seed(self.cfg.base_seed, snr_index),
            wall_time_s: start.elapsed().as_secs_f64(),
            pseudo_inverse_frames: pinv,
            isi_frames: isi,
        })
    }
}

fn geometry_for(
    cfg: &ExperimentConfig,
    grid: &OtfsGrid,
    point: u64,
    trial: u64,
) -> Result<TapGeometry> {
    let mut doppler = trial_rng(point, Stream::Doppler, trial);
    let mut delay = trial_rng(point, Stream::Delay, trial);
    cfg.profile
        .geometry(grid, &mut doppler, &mut delay, cfg.fractional)
}

/// Worker count from `OTFS_WORKERS`, if set.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(OtfsError::config(format!(
                "{WORKERS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(None),
    }
}

/// Run a full sweep on the default pool (or `OTFS_WORKERS` threads).
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    run_sweep_with_workers(cfg, workers_from_env()?)
}

pub fn run_sweep_with_workers(
    cfg: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<SweepResult> {
    let sim = Simulator::new(cfg)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| OtfsError::config(format!("cannot start worker pool: {e}")))?;
    let points = pool.install(|| {
        (0..cfg.snr_db.len())
            .map(|i| {
                let p = sim.run_point(i)?;
                log::info!(
                    "{:?} {} dB: {} errors in {} frames, BER {:.3e}",
                    cfg.system,
                    p.snr_db,
                    p.bit_errors,
                    p.frames,
                    p.ber
                );
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(SweepResult {
        config: cfg.clone(),
        fingerprint: cfg.fingerprint(),
        bits_per_frame: sim.bits_per_frame(),
        workers: pool.current_num_threads(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(extra: &str) -> ExperimentConfig {
        let text = format!(
            r#"
system = "otfs"
snr_db = [0, 10]
base_seed = 5
{extra}
[grid]
m = 2
n = 2
delta_f_hz = 3750

[profile]
kind = "four-path"

[stopping]
min_bit_errors = 20
max_frames = 600
min_frames = 10
"#
        );
        ExperimentConfig::from_toml_str(&text).unwrap()
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let c = cfg("");
        let a = run_sweep_with_workers(&c, Some(1)).unwrap();
        let b = run_sweep_with_workers(&c, Some(3)).unwrap();
        let strip = |r: &SweepResult| {
            r.points
                .iter()
                .map(|p| (p.frames, p.bit_errors, p.seed))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn stopping_rule_is_respected() {
        let c = cfg("");
        let r = run_sweep_with_workers(&c, Some(1)).unwrap();
        for p in &r.points {
            assert!(p.frames >= 10 && p.frames <= 600);
            assert!(p.bit_errors >= 20 || p.frames == 600);
            assert_eq!(p.ber, p.bit_errors as f64 / (p.frames * 4) as f64);
        }
    }

    #[test]
    fn noiseless_ml_is_error_free() {
        for system in ["otfs", "otfs-rotated", "ofdm"] {
            let mut c = cfg("noiseless = true");
            c.system = serde_json::from_str(&format!("\"{system}\"")).unwrap();
            c.stopping.max_frames = 200;
            let r = run_sweep_with_workers(&c, Some(1)).unwrap();
            assert!(
                r.points
                    .iter()
                    .all(|p| p.bit_errors == 0 && p.frames == 200),
                "{system}"
            );
        }
    }

    #[test]
    fn trials_replay_individually() {
        let sim = Simulator::new(&cfg("")).unwrap();
        let a = sim.run_trial(1, 37).unwrap();
        let b = sim.run_trial(1, 37).unwrap();
        assert_eq!(a, b);
        assert_ne!(sim.data(0, 1), sim.data(1, 1));
    }

    #[test]
    fn mimo_noiseless_ml_is_error_free() {
        let mut c = cfg("noiseless = true\n[mimo]\nn_t = 2\nn_r = 2\n");
        c.system = SystemKind::MimoOtfsRotated;
        c.stopping.max_frames = 50;
        let r = run_sweep_with_workers(&c, Some(1)).unwrap();
        assert_eq!(r.bits_per_frame, 8);
        assert!(r.points.iter().all(|p| p.bit_errors == 0));
    }
}
