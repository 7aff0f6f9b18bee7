//! `lactr` command-line driver.
//!
//! Exit status: 0 on success, 1 for usage errors, 2 for data errors and 3
//! for numeric failures during training.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "lactr", version, about = "Limited-attention collaborative topic regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key (repeatable), e.g. `--set lambda_phi=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cap on worker threads; 0 uses all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a prepared dataset directory from raw items, votes and follower edges.
    Prep {
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        votes: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fit LDA on a prepared dataset to warm-start item topics.
    LdaInit {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on a prepared dataset.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Topic model from `lda-init`; LDA is fitted on the fly when omitted.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// `lactr` or `ctr`.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        lambda_phi: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Cross-validated recall@X of the configured models.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cutoffs as `start:stop:step` or a comma list.
        #[arg(long)]
        x_grid: Option<String>,
        /// Repeat the limited-attention model over values of one key, e.g. `lambda_phi=0.001,0.01,0.1,1`.
        #[arg(long)]
        sweep: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Rank items for one user with a trained model.
    Predict {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        user: String,
        #[arg(long, default_value_t = 20)]
        top: usize,
        /// `interest` or `attention`.
        #[arg(long, default_value = "attention")]
        latent: String,
        /// Only rank items the user has not voted on.
        #[arg(long)]
        exclude_voted: bool,
        /// Also write the ranking and a manifest to this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Sample a synthetic dataset in the raw input formats.
    Simulate {
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Show a user's interests and top influencers.
    Inspect {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        user: String,
        #[arg(long, default_value_t = 3)]
        topics: usize,
        #[arg(long, default_value_t = 5)]
        influencers: usize,
        #[arg(long, default_value_t = 8)]
        words: usize,
        /// Also write the report and a manifest to this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

/// Maps an error chain onto the documented exit codes.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<lactr::Error>() {
            return if e.is_numeric() { 3 } else { 2 };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
