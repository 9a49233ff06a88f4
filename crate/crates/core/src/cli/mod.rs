//! Command-line front end.

pub mod config;
pub mod output;
pub mod run;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{BackendChoice, ExperimentConfig, ExperimentKind};
pub use output::{RunDir, RunManifest, RunStatus};

use crate::error::{Error, Result};
use crate::sampler::default_workers;

pub const DEFAULT_OUT: &str = "glasslab-out";

#[derive(Debug, Parser)]
#[command(name = "glasslab", version, about = "Local-independence experiments for mean-field spin glasses")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the replica-symmetric equations.
    RsSolve(RunArgs),
    /// TV between k-marginals and their predicted products over an N grid.
    LiSweep(RunArgs),
    /// Overlap and thin-shell variances.
    Concentration(RunArgs),
    /// TV between original and surrogate k-marginals.
    DecomposeGap(RunArgs),
    /// Random-projection discrepancies.
    Projection(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed, overriding `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to `workers` in the config, then
    /// GLASSLAB_WORKERS, then the number of CPUs.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory, overriding `out` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    pub fn parts(&self) -> (ExperimentKind, &RunArgs) {
        match self {
            Command::RsSolve(a) => (ExperimentKind::RsSolve, a),
            Command::LiSweep(a) => (ExperimentKind::LiSweep, a),
            Command::Concentration(a) => (ExperimentKind::Concentration, a),
            Command::DecomposeGap(a) => (ExperimentKind::DecomposeGap, a),
            Command::Projection(a) => (ExperimentKind::Projection, a),
        }
    }
}

/// Reads and validates the config with command-line overrides applied.
pub fn load(kind: ExperimentKind, args: &RunArgs) -> Result<(ExperimentConfig, PathBuf, usize)> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::ConfigField { field: args.config.display().to_string(), message: e.to_string() })?;
    let mut cfg = ExperimentConfig::parse(&text, kind)?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if args.workers == Some(0) {
        return Err(Error::param("workers", "must be positive"));
    }
    let workers = args.workers.or(cfg.workers).unwrap_or_else(default_workers);
    let out = args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok((cfg, out, workers))
}

/// Runs a validated experiment into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, workers: usize) -> Result<RunManifest> {
    let mut dir = RunDir::open(out, cfg, workers)?;
    let outcome = run::execute(cfg, &mut dir, workers);
    let manifest = dir.finish(&outcome)?;
    outcome.map(|()| manifest)
}

/// Entry point shared by the binary and tests; returns the exit code.
pub fn main_with(cli: Cli) -> i32 {
    let (kind, args) = cli.command.parts();
    // nothing touches the disk until the config is valid
    let (cfg, out, workers) = match load(kind, args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match run_experiment(&cfg, &out, workers) {
        Ok(_) => {
            eprintln!("{} finished; results in {}", kind.name(), out.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
