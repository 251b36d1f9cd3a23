//! `intervalweib`: generate interval-censored data, fit Weibull reliability
//! models, and evaluate them.
//!
//! Exit codes: 0 success, 1 runtime failure (including failed MCMC
//! diagnostics), 2 usage or configuration error.

mod commands;
mod config;
mod model;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{DataKind, ExperimentConfig, ModelKind};

/// A usage or configuration problem; exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "intervalweib", version, about = "Bayesian Weibull reliability models for interval-censored data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or ingest a dataset and split it by item.
    Datagen {
        #[arg(long, value_enum)]
        kind: Option<DataKind>,
        /// Points for synthetic data, patients for the surrogate.
        #[arg(long)]
        n: Option<usize>,
        /// Inspection window length.
        #[arg(long)]
        window: Option<f64>,
        /// Heart-failure clinical-records CSV.
        #[arg(long)]
        source: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a model and write `model.json` and `fit_report.json`.
    Fit {
        #[arg(long, value_enum)]
        model: Option<ModelKind>,
        /// Training CSV.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Rank network hyperparameters by training-set evidence.
    Gridsearch {
        /// Training CSV.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Train grid points concurrently.
        #[arg(long)]
        parallel: bool,
        #[command(flatten)]
        common: Common,
    },
    /// ROC-AUC and PR-AUC of a fitted model on held-out data.
    Evaluate {
        /// Model artifact; `<out>/model.json` by default.
        #[arg(long)]
        artifact: Option<PathBuf>,
        /// Held-out CSV; `<out>/test.csv` by default.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Reference model artifact for percentage changes.
        #[arg(long)]
        relative_to: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Reliability curves with credible bands as CSV and SVG.
    Curves {
        /// Model artifact; `<out>/model.json` by default.
        #[arg(long)]
        artifact: Option<PathBuf>,
        /// Held-out CSV; `<out>/test.csv` by default.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Overlay the Kaplan-Meier estimate on the population curve.
        #[arg(long)]
        km: bool,
        /// Items to plot individually (repeatable).
        #[arg(long = "item")]
        items: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(common.config.as_deref())?;
    cfg.apply_overrides(common.seed, common.out);
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Datagen {
            kind,
            n,
            window,
            source,
            common,
        } => commands::datagen(&mut load(common)?, commands::DatagenArgs { kind, n, window, source }),
        Command::Fit { model, data, common } => {
            let mut cfg = load(common)?;
            if let Some(m) = model {
                cfg.model.kind = m;
            }
            commands::fit(&cfg, cfg.model.kind, data)
        }
        Command::Gridsearch { data, parallel, common } => commands::gridsearch(&load(common)?, data, parallel),
        Command::Evaluate {
            artifact,
            data,
            relative_to,
            common,
        } => commands::evaluate(&load(common)?, artifact, data, relative_to),
        Command::Curves {
            artifact,
            data,
            km,
            items,
            common,
        } => commands::curves(&load(common)?, artifact, data, km, items),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
