//! Operator command surface for the longitudinal confirmation pipeline.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal
//! invariant violation.

mod commands;
mod config;
mod error;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use config::FileConfig;
use error::CliError;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "longwatch",
    version,
    about = "Confirm static street structures from longitudinal dashcam detections and check them against the permit registry"
)]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse all inputs and print dataset health statistics.
    Validate(commands::validate::ValidateArgs),
    /// Select and stratify annotation candidates near active permits.
    Curate(commands::curate::CurateArgs),
    /// Run the over-time confirmation pass and export cell verdicts.
    Tag(commands::tag::TagArgs),
    /// Amplified precision-recall sweep and threshold selection.
    Thresholds(commands::thresholds::ThresholdsArgs),
    /// Match confirmations against the permit registry and report.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Download the permit registry from the open-data endpoint.
    FetchPermits(commands::fetch::FetchArgs),
    /// Synthetic-world check of the pipeline against the analytic model.
    Simulate(commands::simulate::SimulateArgs),
    /// Summed permit age per neighborhood polygon.
    Impact(commands::impact::ImpactArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            std::process::exit(0);
        }
        Err(e) => {
            let _ = e.print();
            std::process::exit(1);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Validate(args) => commands::validate::run(args, &file),
        Command::Curate(args) => commands::curate::run(args, &file),
        Command::Tag(args) => commands::tag::run(args, &file),
        Command::Thresholds(args) => commands::thresholds::run(args, &file),
        Command::Evaluate(args) => commands::evaluate::run(args, &file),
        Command::FetchPermits(args) => commands::fetch::run(args, &file),
        Command::Simulate(args) => commands::simulate::run(args, &file),
        Command::Impact(args) => commands::impact::run(args, &file),
    }
}
