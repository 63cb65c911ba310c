//! `genrehawkes`: batch pipeline over upload records.
//!
//! Stages read and write artifacts in `--out`, so each one can be rerun on
//! its own: `cluster` → `fit` → `forecast` → `attribute` → `report`, or all
//! of them with `run`.

mod artifacts;
mod config;
mod stages;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::{RunArgs, RunConfig};

#[derive(Parser)]
#[command(name = "genrehawkes", version, about = "Genre-cluster Hawkes modelling of upload streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tag graph, components and per-video cluster assignment.
    Cluster(RunArgs),
    /// Full-window fits of every model per cluster.
    Fit(RunArgs),
    /// Train/test split and count forecasts.
    Forecast(RunArgs),
    /// Self-reinforcing, popularity and exogenous shares.
    Attribute(RunArgs),
    /// Collate artifacts into report.json and plot-ready CSVs.
    Report(RunArgs),
    /// All pipeline stages in order.
    Run(RunArgs),
    /// Write a synthetic corpus and its ground truth.
    Simulate(RunArgs),
}

fn execute(cli: Cli) -> Result<()> {
    let (args, stage): (&RunArgs, fn(&RunConfig) -> Result<()>) = match &cli.command {
        Command::Cluster(a) => (a, stages::cmd_cluster),
        Command::Fit(a) => (a, stages::cmd_fit),
        Command::Forecast(a) => (a, stages::cmd_forecast),
        Command::Attribute(a) => (a, stages::cmd_attribute),
        Command::Report(a) => (a, stages::cmd_report),
        Command::Run(a) => (a, stages::cmd_run),
        Command::Simulate(a) => {
            let cfg = RunConfig::resolve(a)?;
            init_threads(&cfg)?;
            return stages::cmd_simulate(&cfg, a.seed.is_some());
        }
    };
    let cfg = RunConfig::resolve(args)?;
    init_threads(&cfg)?;
    stage(&cfg)
}

fn init_threads(cfg: &RunConfig) -> Result<()> {
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
