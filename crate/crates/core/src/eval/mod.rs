//! How well an imitator matches held-out actions and how it fares when
//! deployed, plus the reward maps.

mod heatmap;
mod metrics;
mod returns;

pub use heatmap::{
    min_max_scale, posterior_maps, reward_slice, spearman, uncertainty_occupancy_correlation, write_slice_csv, Grid,
    HeatmapSet, SliceRow,
};
pub use metrics::{action_matching, average_precision, binary_auc, MatchReport};
pub use returns::{eval_threads, live_return, trajectory_folds, Fold, ReturnReport};

use thiserror::Error;

use crate::avril::AvrilError;
use crate::envs::EnvError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("the test set is empty")]
    EmptyTestSet,
    #[error("{0} is undefined")]
    Undefined(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Model(#[from] AvrilError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
