use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use super::EvalError;
use crate::envs::{rollout, Environment, Policy};
use crate::{derive_seed, seeded_rng};

/// Per-episode undiscounted returns with their mean and population std.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReturnReport {
    pub mean: f64,
    pub std: f64,
    pub returns: Vec<f64>,
}

impl ReturnReport {
    pub fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len().max(1) as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let std = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self { mean, std, returns }
    }
}

/// Worker threads for evaluation: `AVRIL_THREADS` when set to a positive
/// integer, otherwise rayon's default.
pub fn eval_threads() -> usize {
    std::env::var("AVRIL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Plays `episodes` episodes of `policy` exactly as given.
///
/// Deploy an imitator through [`crate::envs::Greedy`]. Episodes run in
/// parallel but each draws from its own derived seed, so the result depends
/// only on `seed`.
pub fn live_return<E, P>(env: &E, policy: &P, episodes: usize, max_steps: usize, seed: u64) -> ReturnReport
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    let run = || -> Vec<f64> {
        (0..episodes)
            .into_par_iter()
            .map(|i| rollout(env, policy, derive_seed(seed, i), max_steps).total_reward)
            .collect()
    };
    let returns = match rayon::ThreadPoolBuilder::new().num_threads(eval_threads()).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    };
    ReturnReport::from_returns(returns)
}

/// Trajectory indices used for training and for testing.
pub type Fold = (Vec<usize>, Vec<usize>);

/// Shuffled trajectory-level `k`-fold split as `(train, test)` index lists.
///
/// Whole trajectories land in one fold so no test tuple shares an episode
/// with a training tuple.
pub fn trajectory_folds(n_trajectories: usize, k: usize, seed: u64) -> Result<Vec<Fold>, EvalError> {
    if k < 2 || n_trajectories < k {
        return Err(EvalError::Input(format!(
            "{k}-fold split needs k >= 2 and at least k trajectories, got {n_trajectories}"
        )));
    }
    let mut order: Vec<usize> = (0..n_trajectories).collect();
    order.shuffle(&mut seeded_rng(seed, 0));
    Ok((0..k)
        .map(|f| {
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for (pos, &i) in order.iter().enumerate() {
                if pos % k == f {
                    test.push(i);
                } else {
                    train.push(i);
                }
            }
            train.sort_unstable();
            test.sort_unstable();
            (train, test)
        })
        .collect())
}
