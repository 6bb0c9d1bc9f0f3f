//! Experiment configuration, Monte Carlo sweeps, bound curves, comparisons and reports.

pub mod bounds;
pub mod chain;
pub mod compare;
pub mod config;
pub mod rank;
pub mod report;
pub mod seeds;
pub mod sweep;

pub use bounds::{run_bounds, BoundCurves, BoundRow};
pub use chain::{chain_check, ChainReport};
pub use compare::{run_compare, snr_at_ber, Comparison, GainRow};
pub use config::{DetectorKind, ExperimentConfig, StoppingRule, SystemKind};
pub use rank::{rank_report_toml, run_rank_analysis};
pub use sweep::{run_sweep, run_sweep_with_workers, Simulator, SweepPoint, SweepResult};
