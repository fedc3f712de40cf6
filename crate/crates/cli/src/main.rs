//! `nonholo`: simulate and verify modified LR / L+R systems from JSON configs.
//!
//! Exit codes: 0 success, 2 tolerance failure, 3 configuration error,
//! 4 numerical abort.

mod commands;
mod config;
mod error;
mod output;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Report;
use crate::config::{load_config, Check};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "nonholo", version, about = "Simulate and verify ε-modified LR and L+R nonholonomic systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write it as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed of random initial data.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a measure or integral check over one or more seeds.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the `checks` list of the config.
        #[arg(long)]
        check: Option<Check>,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a system with its counterpart, e.g. `ball_rubber:elr_multiplier`.
    Crosscheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        pair: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<Vec<Report>, CliError> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let cfg = load_config(&config)?;
            Ok(vec![commands::simulate(&cfg, seed, out.as_deref())?])
        }
        Command::Verify {
            config,
            check,
            seeds,
            out,
        } => {
            let cfg = load_config(&config)?;
            commands::verify(&cfg, check, seeds, out.as_deref())
        }
        Command::Crosscheck { config, pair, out } => {
            let cfg = load_config(&config)?;
            Ok(vec![commands::crosscheck(&cfg, &pair, out.as_deref())?])
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match run(cli) {
        Ok(reports) => {
            for line in reports.iter().flat_map(|r| &r.summary) {
                println!("{line}");
            }
            ExitCode::from(reports.iter().map(Report::exit_code).max().unwrap_or(0))
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
