//! `sdrf` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "sdrf",
    version,
    about = "Survey-weighted distributional random forests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Configuration file (JSON, or TOML by `.toml` extension).
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed; required for every command that draws random numbers.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

impl CommonArgs {
    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("--seed is required for this command".into()))
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic population and draw a survey sample from it.
    Simulate(CommonArgs),
    /// Fit a forest on a sample CSV and save it as JSON.
    Fit(CommonArgs),
    /// Evaluate conditional functionals of a fitted forest at query points.
    Predict(CommonArgs),
    /// Run the simulation benchmark.
    Bench(CommonArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    type Run = fn(&CommonArgs) -> Result<(), CliError>;
    let (args, run): (&CommonArgs, Run) = match &cli.command {
        Command::Simulate(a) => (a, commands::simulate),
        Command::Fit(a) => (a, commands::fit),
        Command::Predict(a) => (a, commands::predict),
        Command::Bench(a) => (a, commands::bench),
    };
    let result = match sdrf::forest::with_workers(args.workers, || run(args)) {
        Ok(r) => r,
        Err(e) => Err(e.into()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
