//! Command-line driver for simulation, calibration, set-point tables and
//! toggle-experiment analysis.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wakesteer::Error;

use crate::commands::DataError;
use crate::config::Loaded;

#[derive(Parser)]
#[command(name = "wakesteer", version, about = "Wake steering experiments on synthetic and field SCADA data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for artifacts and default inputs.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Fit wake spreading rates to baseline SCADA.
    Calibrate,
    /// Optimal set-points over a direction sweep.
    Optimize,
    /// Set-point lookup table over the condition grid.
    Table,
    /// Synthetic SCADA from the hidden farm model.
    Simulate,
    /// Energy gains of a toggle experiment.
    Analyze,
}

fn is_data_error(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        if cause.is::<DataError>() || cause.is::<toml::de::Error>() || cause.is::<std::io::Error>() {
            return true;
        }
        match cause.downcast_ref::<Error>() {
            Some(e) => !matches!(e, Error::EnsembleCollapse { .. } | Error::Json(_)),
            None => false,
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match Loaded::load(cli.config.as_deref(), cli.seed, &cli.out) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Calibrate => commands::cmd_calibrate(&run),
        Command::Optimize => commands::cmd_optimize(&run),
        Command::Table => commands::cmd_table(&run),
        Command::Simulate => commands::cmd_simulate(&run),
        Command::Analyze => commands::cmd_analyze(&run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_data_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
