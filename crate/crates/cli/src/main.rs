//! `otnas`: generate synthetic tasks, pretrain a supernet zoo, compute
//! dataset distances and run transfer experiments from a JSON config.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use otnas_core::Error;

#[derive(Parser, Debug)]
#[command(name = "otnas", version, about = "Supernet transfer experiments driven by dataset distances")]
pub struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true, default_value = "otnas.json")]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for concurrent runs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic datasets into the dataset directory.
    GenData {
        /// JSON list of task specs; defaults to `tasks` from the config.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train supernets from scratch and add them to the zoo.
    Pretrain {
        /// Dataset to pretrain; all datasets when omitted.
        #[arg(long)]
        target: Option<String>,
    },
    /// Pairwise dataset distances as `distances.csv`.
    Dist,
    /// Warm-start from the closest zoo source and fine-tune.
    Transfer {
        #[arg(long)]
        target: String,
    },
    /// Train on the target from scratch.
    Scratch {
        #[arg(long)]
        target: String,
    },
    /// Transfer from every eligible zoo source.
    Oracle {
        #[arg(long)]
        target: String,
    },
    /// Pretrain on every other dataset, then transfer to the target.
    Loo {
        #[arg(long)]
        target: String,
    },
    /// Aggregate run files into `comparison.csv` and `gapcount.txt`.
    Report,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Precondition(_) | Error::NotFound(_) | Error::Conflict(_) => 2,
        Error::Incompatible(_) | Error::Corruption(_) | Error::Format(_) => 3,
        Error::Numerical(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
