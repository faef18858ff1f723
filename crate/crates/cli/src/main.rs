//! `calibet` — ingest game/odds data, engineer features, select forecasting
//! models by accuracy or calibration, and backtest value-bet staking rules.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod csvio;
mod pipeline;

use config::{Branch, PipelineConfig};
use pipeline::PipelineError;

#[derive(Parser)]
#[command(
    name = "calibet",
    version,
    about = "Calibration-vs-accuracy model selection and value-bet backtesting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Join the games and odds files into the matched-games artifact.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the feature matrix and run the covariate-shift screen.
    Features {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run both model-selection branches (filter, SFS, grid search, test).
    Select {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate betting on the held-out season with the selected model.
    Backtest {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Branch to back (accuracy | calibration); default: all configured.
        #[arg(long)]
        branch: Option<String>,
        /// Stake rule name from the config (e.g. fixed, kelly8); default: all.
        #[arg(long)]
        rule: Option<String>,
        /// Override the configured initial bankroll.
        #[arg(long)]
        bankroll: Option<f64>,
    },
    /// Print a comparison table across completed backtests.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Path, out: Option<PathBuf>) -> Result<PipelineConfig, PipelineError> {
    let mut config = PipelineConfig::load(path)?;
    if let Some(dir) = out {
        config.out_dir = dir;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Ingest { config, out } => {
            pipeline::run_ingest(&load_config(&config, out)?)?;
            Ok(())
        }
        Command::Features { config, out } => pipeline::run_features(&load_config(&config, out)?),
        Command::Select { config, out } => pipeline::run_select(&load_config(&config, out)?),
        Command::Backtest {
            config,
            out,
            branch,
            rule,
            bankroll,
        } => {
            let branch = match branch {
                Some(name) => Some(Branch::parse(&name).ok_or_else(|| {
                    PipelineError::Usage(format!(
                        "unknown branch '{name}' (expected 'accuracy' or 'calibration')"
                    ))
                })?),
                None => None,
            };
            pipeline::run_backtest(&load_config(&config, out)?, branch, rule, bankroll)
        }
        Command::Report { config, out } => pipeline::run_report(&load_config(&config, out)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
