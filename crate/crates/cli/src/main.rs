//! `mlti` command-line tool.

mod commands;
mod config;
mod error;
mod output;
mod verify;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{EstimateArgs, McArgs, SearchArgs, SweepArgs, VerifyArgs};

/// Multi-level transversal injection: evaluate plans, search parameters
/// and compare state-preparation costs.
#[derive(Parser, Debug)]
#[command(name = "mlti", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate one plan file and print the report as JSON.
    Estimate(EstimateArgs),
    /// Cheapest MLTI plan per Clifford level and level count (CSV).
    Optimize(SearchArgs),
    /// MLTI vs distillation vs synthesis over Clifford levels (CSV).
    Sweep(SweepArgs),
    /// Run the property suites; non-zero exit on any failure.
    Verify(VerifyArgs),
    /// Monte Carlo discard and undetected group-Z rates (CSV).
    Mc(McArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = config::apply_thread_limit().and_then(|()| match &cli.command {
        Command::Estimate(a) => commands::cmd_estimate(a),
        Command::Optimize(a) => commands::cmd_optimize(a),
        Command::Sweep(a) => commands::cmd_sweep(a),
        Command::Verify(a) => commands::cmd_verify(a),
        Command::Mc(a) => commands::cmd_mc(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
