//! Command-line front end: simulate the converter/infinite-bus experiment,
//! identify its dynamics with SINDy and/or symbolic regression, and render
//! the comparison report.

use cibsysid::config::RunConfig;
use cibsysid::pipeline::Pipeline;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cibsysid",
    about = "Grid-forming converter / infinite-bus simulation and data-driven identification",
    version
)]
struct Cli {
    /// TOML configuration file; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Global seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the disturbance schedule and write the dataset.
    Simulate,
    /// Fit the sparse regression model on an existing dataset.
    Sindy,
    /// Train the expression-search model on an existing dataset.
    Dsr,
    /// Run one identification method by name.
    Identify {
        #[arg(long)]
        method: String,
    },
    /// Compare the stored models and emit report tables and plot data.
    Report,
    /// Full pipeline: simulate, both identifications, report.
    All,
}

fn run() -> cibsysid::Result<()> {
    let cli = Cli::parse();
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let pipeline = Pipeline::new(cfg)?;
    match cli.command {
        Command::Simulate => {
            pipeline.simulate()?;
        }
        Command::Sindy => {
            pipeline.identify_sindy()?;
        }
        Command::Dsr => {
            pipeline.identify_dsr()?;
        }
        Command::Identify { method } => match method.as_str() {
            "sindy" => {
                pipeline.identify_sindy()?;
            }
            "dsr" => {
                pipeline.identify_dsr()?;
            }
            other => {
                return Err(cibsysid::Error::Config(format!(
                    "unknown method '{other}'; expected 'sindy' or 'dsr'"
                )))
            }
        },
        Command::Report => {
            pipeline.report()?;
        }
        Command::All => {
            pipeline.all()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
