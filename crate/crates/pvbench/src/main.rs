//! `pvbench`: synthesise fleets, run rolling backtests, and report and
//! compare forecasting models.
//!
//! Exit codes: 0 success; 1 runtime or data error; 2 usage or configuration
//! error (including refusing to overwrite outputs); 3 backtest finished but
//! some (plant, model, fold) fits failed and were not tolerated.

mod commands;
mod config;
mod manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pvbench_core::models::ModelKind;

use commands::{BacktestFlags, Common, ReportBy};

#[derive(Debug, Parser)]
#[command(name = "pvbench", version, about = "Day-ahead PV power forecasting benchmark")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = config::CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the configured run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replace existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic fleet as dataset CSV files.
    Synth,
    /// Run the weekly-retraining backtest.
    Backtest {
        /// Comma-separated models, overriding the configuration.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<ModelKind>>,
        /// Exit 0 even if some fits failed.
        #[arg(long)]
        tolerate_failures: bool,
    },
    /// Emit CSV, JSON and SVG tables from a backtest directory.
    Report {
        /// Backtest directory; defaults to `<out>/backtest` from the configuration.
        dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "month")]
        by: ReportBy,
    },
    /// Wilcoxon signed-rank test of two models' hourly absolute errors.
    Compare {
        dir: PathBuf,
        model_a: ModelKind,
        model_b: ModelKind,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let common = Common {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        force: cli.force,
    };
    let result = match &cli.command {
        Command::Synth => commands::synth(&common),
        Command::Backtest { models, tolerate_failures } => commands::backtest(
            &common,
            &BacktestFlags {
                models: models.clone(),
                tolerate_failures: *tolerate_failures,
            },
        ),
        Command::Report { dir, by } => commands::report(&common, dir.as_deref(), *by),
        Command::Compare { dir, model_a, model_b } => commands::compare(&common, dir, *model_a, *model_b),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
