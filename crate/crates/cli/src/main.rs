//! `gossip-sa`: run gossip stochastic-approximation experiments from a TOML
//! configuration.
//!
//! Exit codes: 0 pass, 1 configuration or validation error, 2 divergence,
//! 3 tolerance-check failure.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Experiment, ExperimentConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "gossip-sa",
    version,
    about = "Distributed stochastic approximation over gossip networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for replica-parallel commands.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Root seed (overrides `run.root_seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Contraction coefficient and validation of the gossip scheme.
    Rho,
    /// One trajectory, recorded to `trajectory.csv`.
    Simulate,
    /// Replica ensemble with per-run, aggregate and histogram outputs.
    Montecarlo,
    /// Empirical against predicted asymptotic covariance.
    Clt,
    /// Disagreement moments against the contraction bound.
    Rate,
    /// Gap between the critical-step covariance and the inverse Fisher information.
    Efficiency,
}

fn load(cli: &Cli) -> Result<Experiment, CliError> {
    let config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::default(),
    };
    Experiment::build(&config, cli.seed, cli.out.clone())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))?;
    }
    let exp = load(cli)?;
    match cli.command {
        Command::Rho => commands::rho(&exp),
        Command::Simulate => commands::simulate(&exp),
        Command::Montecarlo => commands::montecarlo(&exp),
        Command::Clt => commands::clt(&exp),
        Command::Rate => commands::rate(&exp),
        Command::Efficiency => commands::efficiency(&exp),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
