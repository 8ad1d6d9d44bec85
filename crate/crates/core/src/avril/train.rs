use std::io::Write;

use rand::seq::SliceRandom;

use super::{AvrilConfig, AvrilError, AvrilModel, ObjectiveBreakdown};
use crate::diffcore::{Adam, DiffError, ParamVector};
use crate::envs::Dataset;
use crate::{seeded_rng, SimRng};

pub(crate) const PHI_STREAM: u64 = 1;
pub(crate) const THETA_STREAM: u64 = 2;
pub(crate) const BATCH_STREAM: u64 = 3;

/// Epoch-shuffled minibatches drawn without replacement.
///
/// When fewer than `b` unseen indices remain the epoch ends, the order is
/// reshuffled and the remainder is dropped.
pub(crate) struct Batcher {
    order: Vec<usize>,
    pos: usize,
    rng: SimRng,
}

impl Batcher {
    pub(crate) fn new(n: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed, BATCH_STREAM);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self { order, pos: 0, rng }
    }

    pub(crate) fn next_batch(&mut self, b: usize) -> &[usize] {
        if self.pos + b > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let batch = &self.order[self.pos..self.pos + b];
        self.pos += b;
        batch
    }
}

/// Per-iteration objective values, recorded before each parameter update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<ObjectiveBreakdown>,
}

impl TrainingLog {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,loglik,kl,constraint,total")?;
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(out, "{i},{},{},{},{}", r.log_likelihood, r.kl, r.constraint, r.total)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&ObjectiveBreakdown> {
        self.rows.last()
    }

    /// Relative change of the mean total between the last two windows is below `tol`.
    pub(crate) fn converged(&self, window: usize, tol: f64) -> bool {
        let n = self.rows.len();
        if tol == 0.0 || n < 2 * window {
            return false;
        }
        let mean = |rows: &[ObjectiveBreakdown]| rows.iter().map(|r| r.total).sum::<f64>() / rows.len() as f64;
        let previous = mean(&self.rows[n - 2 * window..n - window]);
        let current = mean(&self.rows[n - window..]);
        (current - previous).abs() < tol * previous.abs().max(f64::MIN_POSITIVE)
    }
}

/// State at the point a run stopped producing finite numbers.
#[derive(Clone, Debug)]
pub struct Divergence {
    pub iter: usize,
    pub term: &'static str,
    /// Parameters before the failing iteration.
    pub last_finite: ParamVector,
    pub log: TrainingLog,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: AvrilModel,
    pub params: ParamVector,
    pub log: TrainingLog,
    pub converged: bool,
}

/// Ascends the objective on both parameter sets jointly with Adam.
///
/// Each iteration draws a minibatch of `b` tuples, scales its objective by
/// `n / b` as an unbiased estimate of the full-data objective, and takes one
/// step. Runs are fully determined by the config (including its seed).
pub fn train(dataset: &Dataset, config: &AvrilConfig) -> Result<TrainOutcome, AvrilError> {
    train_observed(dataset, config, |_, _| {})
}

/// [`train`], handing the joint parameters to `observer` after every update.
pub fn train_observed<F>(dataset: &Dataset, config: &AvrilConfig, mut observer: F) -> Result<TrainOutcome, AvrilError>
where
    F: FnMut(usize, &[f64]),
{
    let model = AvrilModel::new(config.clone(), dataset.space, dataset.n_actions)?;
    if dataset.is_empty() {
        return Err(AvrilError::Input("dataset has no transitions".into()));
    }
    if config.batch_size > dataset.len() {
        return Err(AvrilError::Config {
            field: "batch_size",
            message: format!("{} exceeds the {} available transitions", config.batch_size, dataset.len()),
        });
    }
    let mut params = model.init_params();
    let mut adam = Adam::new(params.len(), config.lr);
    let mut batcher = Batcher::new(dataset.len(), config.seed);
    let scale = dataset.len() as f64 / config.batch_size as f64;
    let mut log = TrainingLog::default();
    let mut converged = false;

    for iter in 0..config.max_iters {
        let batch = batcher.next_batch(config.batch_size);
        let step = model.objective_and_gradient(
            &params.values,
            batch.iter().map(|&i| &dataset.transitions[i]),
            scale,
        );
        let (breakdown, grad) = match step {
            Ok(ok) => ok,
            Err(AvrilError::Diff(DiffError::NonFinite { term })) => {
                return Err(AvrilError::Diverged(Box::new(Divergence {
                    iter,
                    term,
                    last_finite: params,
                    log,
                })))
            }
            Err(e) => return Err(e),
        };
        log.rows.push(breakdown);
        let before = params.values.clone();
        adam.step(&mut params.values, &grad, true);
        if params.values.iter().any(|v| !v.is_finite()) {
            params.values = before;
            return Err(AvrilError::Diverged(Box::new(Divergence {
                iter,
                term: "parameters",
                last_finite: params,
                log,
            })));
        }
        observer(iter, &params.values);
        if log.converged(config.convergence_window, config.convergence_tol) {
            converged = true;
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        params,
        log,
        converged,
    })
}
