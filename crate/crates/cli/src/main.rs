//! Batch CLI for longitudinal binary change-point fits with bridge random
//! effects: simulate cohorts, fit models 1-8 (or custom priors), compare
//! fitted runs, re-summarize draws, and report convergence diagnostics.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "bridgecp", version, about = "Bayesian change-point analysis of longitudinal binary panels with bridge random effects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Run configuration file (flat key = value lines).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Named model 1..8; overrides the config file.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=8))]
    model: Option<u8>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let over = Overrides {
            seed: self.seed,
            out: self.out.clone(),
            model: self.model,
        };
        RunConfig::from_file(&self.config, &over)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort panel and its truth sidecar.
    Simulate(ConfigArgs),
    /// Fit the configured model and write draws, diagnostics and summaries.
    Fit(ConfigArgs),
    /// Compare fitted runs (same panel) by DIC and LPML.
    Compare {
        /// Run directories produced by `fit`.
        runs: Vec<PathBuf>,
    },
    /// Re-summarize an existing run directory from its draws file.
    Summarize {
        run: PathBuf,
    },
    /// Convergence report (PSRF, effective sample size, autocorrelation).
    Diagnose {
        run: PathBuf,
        /// Longest autocorrelation lag to evaluate.
        #[arg(long, default_value_t = 200)]
        max_lag: usize,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(args) => commands::cmd_simulate(&args.resolve()?),
        Command::Fit(args) => commands::cmd_fit(&args.resolve()?),
        Command::Compare { runs } => {
            let table = commands::cmd_compare(&runs)?;
            print!("{table}");
            Ok(())
        }
        Command::Summarize { run } => {
            let text = commands::cmd_summarize(&run)?;
            print!("{text}");
            Ok(())
        }
        Command::Diagnose { run, max_lag } => {
            let text = commands::cmd_diagnose(&run, max_lag)?;
            print!("{text}");
            Ok(())
        }
    }
}
