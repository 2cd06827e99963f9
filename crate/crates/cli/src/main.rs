//! `dgwm`: experiment runner for domain-guided weight modulation.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::CliError;

#[derive(Debug, Parser)]
#[command(name = "dgwm", version, about = "Semi-supervised domain generalization experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Flat key=value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Base training seed; trial i uses seed + i.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Output root; falls back to the config, then $DGWM_OUTPUT_DIR.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Name of the run directory; derived from the config hash by default.
    #[arg(long, global = true)]
    pub run_id: Option<String>,
    /// few-labels or one-labeled-domain.
    #[arg(long, global = true)]
    pub setting: Option<String>,
    #[arg(long, global = true)]
    pub labels_per_class: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Seeded multi-trial training with mean ± std aggregation.
    Train,
    /// Target accuracy of a saved checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// One run set per cell of a key grid.
    Ablate {
        /// KEY=V1,V2,...; repeatable, cells are the cartesian product.
        #[arg(long = "grid", value_name = "KEY=VALUES", required = true)]
        grid: Vec<String>,
    },
    /// Gradient, identity and mask invariant checks.
    Verify,
    /// Pseudo-label accuracy and utilization over thresholds, plus
    /// restricted-logit agreement per epoch.
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95])]
        thresholds: Vec<f64>,
        /// Held-out batches per source domain.
        #[arg(long, default_value_t = 4)]
        batches: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
    },
    /// Write the configured synthetic dataset as CSV.
    GenData,
    /// Train on growing source prefixes with modulation off and on.
    AddDomains,
    /// Per-epoch time with modulation off and on.
    Overhead {
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train => commands::train(&cli.common),
        Command::Eval { checkpoint } => commands::eval(&cli.common, checkpoint),
        Command::Ablate { grid } => commands::ablate(&cli.common, grid),
        Command::Verify => commands::verify(&cli.common),
        Command::Sweep { thresholds, batches, batch_size } => {
            commands::sweep(&cli.common, thresholds, *batches, *batch_size)
        }
        Command::GenData => commands::gen_data(&cli.common),
        Command::AddDomains => commands::add_domains(&cli.common),
        Command::Overhead { repeats } => commands::overhead(&cli.common, *repeats),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) | CliError::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
