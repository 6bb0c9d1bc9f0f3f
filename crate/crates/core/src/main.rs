use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use otfs::harness::report::write_sweep;
use otfs::harness::{
    chain_check, rank_report_toml, run_bounds, run_compare, run_rank_analysis, run_sweep,
    ChainReport, ExperimentConfig,
};
use otfs::{OtfsError, Result};

/// OTFS delay-Doppler link simulation and diversity analysis.
#[derive(Parser)]
#[command(name = "otfs", version)]
struct Cli {
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo BER sweep.
    Sim(RunArgs),
    /// Rank and diversity enumeration.
    Rank(RunArgs),
    /// Lower, asymptotic and union bound curves.
    Bounds(RunArgs),
    /// Paired sweep of the config and its [compare] system, with SNR gains.
    Compare(RunArgs),
    /// Check the modem chain and symbol-matrix models against the channel matrix.
    ChainCheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 8)]
        max_dim: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override base_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the SNR list, e.g. `0,5,10`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_path(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.base_seed = seed;
        }
        if let Some(snr) = &self.snr {
            cfg.snr_db = snr.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, text)?;
            log::info!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sim(args) => {
            let cfg = args.load()?;
            let result = run_sweep(&cfg)?;
            match &args.out {
                Some(path) => {
                    write_sweep(&result, path)?;
                    log::info!("wrote {}", path.display());
                }
                None => print!("{}", otfs::harness::report::sweep_csv(&result)),
            }
        }
        Command::Rank(args) => {
            let cfg = args.load()?;
            let report = run_rank_analysis(&cfg)?;
            log::info!(
                "min rank {}, diversity order {}, kappa {}",
                report.min_rank,
                report.diversity_order(),
                report.kappa
            );
            emit(args.out.as_deref(), &rank_report_toml(&cfg, &report)?)?;
        }
        Command::Bounds(args) => {
            let cfg = args.load()?;
            emit(args.out.as_deref(), &run_bounds(&cfg)?.to_csv())?;
        }
        Command::Compare(args) => {
            let cfg = args.load()?;
            let cmp = run_compare(&cfg)?;
            if let Some(path) = &args.out {
                write_sweep(&cmp.primary, &with_suffix(path, "primary"))?;
                write_sweep(&cmp.secondary, &with_suffix(path, "secondary"))?;
            }
            emit(args.out.as_deref(), &cmp.gain_csv())?;
        }
        Command::ChainCheck {
            seed,
            instances,
            max_dim,
        } => {
            if max_dim == 0 {
                return Err(OtfsError::config("--max-dim must be >= 1"));
            }
            let r = chain_check(instances, max_dim, seed)?;
            println!("instances                 {}", r.instances);
            println!(
                "ideal chain vs H          {:.3e} (tol {:e})",
                r.ideal_chain,
                ChainReport::IDEAL_TOL
            );
            println!(
                "frame-cyclic chain vs H   {:.3e} (informational)",
                r.frame_cyclic_chain
            );
            println!(
                "h'X vs Hx, integer        {:.3e} (tol {:e})",
                r.integer_symbol_matrix,
                ChainReport::INTEGER_TOL
            );
            println!(
                "h'X vs Hx, fractional     {:.3e} (tol {:e})",
                r.fractional_symbol_matrix,
                ChainReport::FRACTIONAL_TOL
            );
            if !r.passed() {
                return Err(OtfsError::Numerical(
                    "model equivalence exceeded tolerance".into(),
                ));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
