//! `gmsim`: experiment runner for the Hadamard/PPM joint-detection receiver
//! simulator. Subcommands read a TOML config and write CSV/JSON outputs;
//! every run is reproducible from (config, seed) regardless of thread count.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::ExperimentConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad config or invalid input (exit 2).
    Config(String),
    /// Filesystem or stream-content failure (exit 3).
    Io(String),
    /// Fit or convergence failure (exit 4).
    Fit(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Fit(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Fit(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "gmsim",
    version,
    about = "Simulator and capacity toolkit for BPSK-Hadamard joint detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep PIE over mean photon number for selected receivers.
    PieSweep,
    /// Sweep PIE over channel drift rate and fit the low-pass band function.
    PhaseSweep,
    /// Free-space link budget and advantage-region sweep.
    LinkBudget,
    /// Decode a stored event stream into a transition matrix and histogram.
    DecodeEvents,
    /// Run the sequential per-stage phase correction loop.
    Calibrate,
    /// Estimate one transition matrix from the full pipeline.
    TransitionMatrix,
}

impl Command {
    fn run(&self, cfg: &ExperimentConfig, out: &PathBuf) -> Result<(), CliError> {
        match self {
            Command::PieSweep => commands::pie_sweep(cfg, out),
            Command::PhaseSweep => commands::phase_sweep(cfg, out),
            Command::LinkBudget => commands::link_budget(cfg, out),
            Command::DecodeEvents => commands::decode_events(cfg, out),
            Command::Calibrate => commands::calibrate(cfg, out),
            Command::TransitionMatrix => commands::transition_matrix(cfg, out),
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be positive".to_string()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config PATH is required".to_string()))?;
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", config_path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    cli.command.run(&cfg, &cli.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gmsim: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
