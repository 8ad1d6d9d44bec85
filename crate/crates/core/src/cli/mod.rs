//! The `avril` command-line tool.
//!
//! Invalid configs or inputs exit with status 2. Training that stops
//! producing finite numbers exits with 3. Any other failure exits with 1.

mod commands;
mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use commands::{eval, gen_demos, reproduce, train, GenSummary, ReproduceSummary, TrainSummary};
pub use config::{parse_json, read_json, sha256_hex, Artifacts, FileRef, Method, ModelCard, RunManifest, TrainConfig};

use crate::avril::AvrilError;
use crate::diffcore::{CheckpointError, DiffError};
use crate::envs::DemoError;
use crate::eval::EvalError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Failed(_) => 1,
        }
    }

    pub(crate) fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Failed(format!("{}: {err}", path.display()))
    }
}

impl From<AvrilError> for CliError {
    fn from(e: AvrilError) -> Self {
        match e {
            AvrilError::Config { .. } | AvrilError::Input(_) => CliError::Config(e.to_string()),
            AvrilError::Diverged(_) | AvrilError::Diff(DiffError::NonFinite { .. }) => CliError::Numeric(e.to_string()),
            AvrilError::Diff(_) => CliError::Failed(e.to_string()),
        }
    }
}

impl From<DiffError> for CliError {
    fn from(e: DiffError) -> Self {
        AvrilError::from(e).into()
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(m) => m.into(),
            EvalError::Io(_) => CliError::Failed(e.to_string()),
            EvalError::Undefined(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<DemoError> for CliError {
    fn from(e: DemoError) -> Self {
        match e {
            DemoError::Io(_) => CliError::Failed(e.to_string()),
            _ => CliError::Config(format!("demos: {e}")),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Config(format!("checkpoint: {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(name = "avril", version, about = "Offline variational Bayesian inverse RL")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roll out the environment's expert and save the demonstrations as JSON Lines.
    GenDemos {
        /// Environment spec (JSON).
        #[arg(long = "env", visible_alias = "config")]
        env: PathBuf,
        /// Number of trajectories.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train from demonstrations; the run directory gets a manifest next to the checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides every seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Rerun a training command from its manifest and compare checkpoints.
    Reproduce {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    /// ACC/AUC/APS against the demonstrated actions.
    Match,
    /// Live return of the greedy imitator.
    Rollout,
    /// Scaled per-cell grids of the reward posterior (gridworld only).
    Heatmaps,
    /// Posterior along one state dimension (continuous states only).
    Slice,
}

#[derive(Clone, Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum)]
    pub mode: EvalMode,
    #[arg(long)]
    pub demos: Option<PathBuf>,
    /// Environment spec overriding the one stored in the checkpoint.
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300)]
    pub episodes: usize,
    /// State dimension swept by `slice`.
    #[arg(long, default_value_t = 0)]
    pub dim: usize,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub hi: f64,
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    /// Comma-separated base state for `slice`; zeros by default.
    #[arg(long, allow_hyphen_values = true)]
    pub base: Option<String>,
    /// Action for state-action rewards in `slice`.
    #[arg(long)]
    pub action: Option<usize>,
}

/// Runs one command and returns the lines to print on success.
pub fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    match cli.command {
        Command::GenDemos { env, n, seed, out } => {
            let s = gen_demos(&env, n, seed, &out)?;
            Ok(vec![format!(
                "wrote {} trajectories to {} (mean length {:.2}, mean expert return {:.3})",
                s.n_trajectories,
                out.display(),
                s.mean_length,
                s.mean_return
            )])
        }
        Command::Train { config, demos, out, seed } => {
            let s = train(&config, &demos, &out, seed)?;
            Ok(vec![
                format!("checkpoint {} sha256 {}", s.checkpoint.display(), s.checkpoint_sha256),
                format!("iterations {}{}", s.iterations, if s.converged { " (converged)" } else { "" }),
            ])
        }
        Command::Eval(args) => eval(&args),
        Command::Reproduce { manifest, out } => {
            let s = reproduce(&manifest, &out)?;
            let mut lines = vec![format!("checkpoint sha256 {}", s.checkpoint_sha256)];
            match s.original_sha256 {
                Some(orig) if orig == s.checkpoint_sha256 => lines.push("identical to the original checkpoint".into()),
                Some(orig) => {
                    return Err(CliError::Failed(format!(
                        "checkpoint differs from the original ({orig} vs {})",
                        s.checkpoint_sha256
                    )))
                }
                None => lines.push("original checkpoint not found; nothing to compare".into()),
            }
            Ok(lines)
        }
    }
}
