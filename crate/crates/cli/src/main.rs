//! `hjb-exec`: solve the execution value-factor equation, simulate optimal
//! executions, and run the experiment pipelines.
//!
//! Exit codes: 0 success, 1 declared non-convergence, 2 parse/usage errors,
//! 3 semantic configuration errors, 4 output i/o failures, 5 numeric
//! failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hjb_exec_core::config::RunConfig;
use hjb_exec_core::runner::{self, Overrides};
use hjb_exec_core::Error;

#[derive(Parser)]
#[command(
    name = "hjb-exec",
    version,
    about = "Adaptive optimal trade execution under stochastic liquidity and volatility"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (TOML); omitted sections fall back to the
    /// reference preset, and omitting the flag uses the preset entirely.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for CSVs and reports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override the Monte Carlo master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Sweep parameter name (sweep subcommand): penalty, impact_exponent, or
    /// risk_aversion.
    #[arg(long, global = true)]
    param: Option<String>,

    /// Comma-separated sweep values (sweep subcommand).
    #[arg(long, global = true, value_delimiter = ',')]
    values: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the coefficient bounds and the penalty threshold.
    Validate,
    /// Export the bounding curves and derived constants.
    Bounds,
    /// Solve the value-factor equation and export the grid.
    Solve,
    /// Solve, simulate the optimal execution over the path batch, and export
    /// statistics.
    Simulate,
    /// Comparative statics over one parameter with common random numbers.
    Sweep,
    /// Penalty ladder toward the complete-execution limit.
    Singular,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let sub = match cli.command {
        Command::Validate => runner::Subcommand::Validate,
        Command::Bounds => runner::Subcommand::Bounds,
        Command::Solve => runner::Subcommand::Solve,
        Command::Simulate => runner::Subcommand::Simulate,
        Command::Sweep => runner::Subcommand::Sweep,
        Command::Singular => runner::Subcommand::Singular,
    };

    let config = match &cli.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    };
    let config = match config {
        Ok(cfg) => cfg,
        Err(err) => return fail(&err),
    };

    let overrides = Overrides {
        master_seed: cli.seed,
        sweep_parameter: cli.param.clone(),
        sweep_values: cli.values.clone(),
    };

    match runner::run(sub, &config, &cli.out, &overrides) {
        Ok(outcome) => {
            for file in &outcome.files {
                println!("wrote {}", file.display());
            }
            if outcome.converged {
                ExitCode::SUCCESS
            } else {
                eprintln!("warning: a solve did not converge within the iteration budget");
                ExitCode::from(1)
            }
        }
        Err(err) => fail(&err),
    }
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(runner::exit_code_for(err) as u8)
}
