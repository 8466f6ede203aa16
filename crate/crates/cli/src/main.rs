//! `starscale` experiment driver.
//!
//! Exit codes: 0 success, 1 configuration error, 2 kernel not good,
//! 3 sampler failure (covariance not positive semi-definite), 4 verification failed.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("kernel is not good: {0}")]
    Kernel(String),
    #[error("sampler failed: {0}")]
    Sampler(String),
    #[error("verification failed: {}", .0.join(", "))]
    Verification(Vec<String>),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Runtime(_) => 1,
            CliError::Kernel(_) => 2,
            CliError::Sampler(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl From<starscale::Error> for CliError {
    fn from(e: starscale::Error) -> Self {
        match e {
            starscale::Error::NotPsd(_) => CliError::Sampler(e.to_string()),
            starscale::Error::Io(_) => CliError::Runtime(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "starscale", version, about = "Simulate and verify lognormal star-scale invariant random measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Override `ensemble.master_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cap on worker threads (overrides `ensemble.workers`).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Proceed even if the kernel fails the goodness test.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate K and k_ε, run the goodness test and kernel identities.
    Kernel(Common),
    /// Generate an ensemble and write it to disk.
    Sample(Common),
    /// Run the configured statistical tests.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Generate the ensemble in memory instead of reading it from disk.
        #[arg(long)]
        sample: bool,
    },
}

fn main() -> ExitCode {
    // usage errors exit 1: code 2 is reserved for kernels that are not good
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Kernel(c) => commands::kernel(&c),
        Command::Sample(c) => commands::sample(&c),
        Command::Verify { common, sample } => commands::verify(&common, sample),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("starscale: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
