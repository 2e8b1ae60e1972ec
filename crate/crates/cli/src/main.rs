//! `scldgm`: batch runs of density evolution, threshold searches, bounds,
//! Monte-Carlo simulation, degree optimization and convergence profiles.
//!
//! Exit codes: 0 success, 2 configuration error, 3 computation error.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Compute(#[from] scldgm::Error),
    #[error("output error: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) | CliError::Output(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "scldgm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Two-step DDE over an Eb/No sweep.
    Dde,
    /// Decoding thresholds of outer codes or concatenations.
    Threshold,
    /// DDE error next to the closed-form error-floor bound.
    Bounds,
    /// Monte-Carlo BER of finite-length codes.
    Simulate,
    /// Differential-evolution search for an inner degree distribution.
    Optimize,
    /// Inner iterations needed to reach the critical BER.
    Convergence,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli.config.as_deref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let ctx = commands::Context {
        config_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        out: cli.out.clone(),
        seed: cli.seed,
    };
    match cli.command {
        Command::Dde => commands::dde(config::load(path)?, &ctx),
        Command::Threshold => commands::threshold(config::load(path)?, &ctx),
        Command::Bounds => commands::bounds(config::load(path)?, &ctx),
        Command::Simulate => commands::simulate(config::load(path)?, &ctx),
        Command::Optimize => commands::optimize(config::load(path)?, &ctx),
        Command::Convergence => commands::convergence(config::load(path)?, &ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
