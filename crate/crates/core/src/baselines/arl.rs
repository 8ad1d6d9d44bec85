use serde::{Deserialize, Serialize};

use crate::avril::{decoder_spec, state_input, AvrilError, Batcher, DecoderForm, QPolicy, THETA_STREAM};
use crate::diffcore::{Adam, DiffError, ModelSpec, Tape};
use crate::envs::{Dataset, State};
use crate::seeded_rng;

/// Offline fitted-Q iteration settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FittedQConfig {
    pub decoder_form: DecoderForm,
    pub gamma: f64,
    pub n_sweeps: usize,
    /// Sweeps between copies of the online Q into the frozen target.
    pub target_update_period: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FittedQConfig {
    fn default() -> Self {
        Self {
            decoder_form: DecoderForm::Mlp,
            gamma: 0.99,
            n_sweeps: 20_000,
            target_update_period: 100,
            lr: 1e-3,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl FittedQConfig {
    pub fn validate(&self) -> Result<(), AvrilError> {
        let bad = |field: &'static str, message: String| Err(AvrilError::Config { field, message });
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", format!("must be in [0, 1), got {}", self.gamma));
        }
        if self.n_sweeps == 0 {
            return bad("n_sweeps", "must be at least 1".into());
        }
        if self.target_update_period == 0 {
            return bad("target_update_period", "must be at least 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr", format!("must be finite and > 0, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArlOutcome {
    pub decoder: ModelSpec,
    pub theta: Vec<f64>,
    /// Sup-norm gap between the online Q and its regression targets, one
    /// entry per target refresh.
    pub residuals: Vec<f64>,
}

impl ArlOutcome {
    pub fn policy(&self, beta: f64) -> QPolicy {
        QPolicy {
            decoder: self.decoder.clone(),
            theta: self.theta.clone(),
            beta,
        }
    }
}

/// Learns a Q-function from the dataset's transitions alone, treating
/// `reward(s, a)` as the true reward.
///
/// The tabular form solves each regression exactly: every visited `(s, a)`
/// entry becomes the mean of its targets. Since that fit is idempotent under
/// a fixed target it is performed once per refresh. The network form takes
/// one Adam step on the minibatch squared error per sweep.
pub fn arl_train(
    dataset: &Dataset,
    reward: &(dyn Fn(&State, usize) -> f64 + Sync),
    config: &FittedQConfig,
) -> Result<ArlOutcome, AvrilError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(AvrilError::Input("dataset has no transitions".into()));
    }
    let decoder = decoder_spec(config.decoder_form, dataset.space, dataset.n_actions)?;
    let rewards: Vec<f64> = dataset.transitions.iter().map(|tr| reward(&tr.state, tr.action)).collect();
    if let Some(i) = rewards.iter().position(|r| !r.is_finite()) {
        return Err(AvrilError::Input(format!("reward query is not finite at transition {i}")));
    }
    let theta = decoder.init(&mut seeded_rng(config.seed, THETA_STREAM));
    match decoder {
        ModelSpec::Tabular { cols, .. } => fit_tabular(dataset, &rewards, config, decoder, theta, cols),
        _ => fit_network(dataset, &rewards, config, decoder, theta),
    }
}

fn targets(decoder: &ModelSpec, target: &[f64], dataset: &Dataset, rewards: &[f64], gamma: f64) -> Result<Vec<f64>, DiffError> {
    let mut tape = Tape::default();
    dataset
        .transitions
        .iter()
        .zip(rewards)
        .map(|(tr, r)| {
            if gamma == 0.0 {
                return Ok(*r);
            }
            decoder.forward_tape(target, state_input(&tr.next_state), &mut tape)?;
            let best = tape.output().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(r + gamma * best)
        })
        .collect()
}

fn fit_tabular(
    dataset: &Dataset,
    rewards: &[f64],
    config: &FittedQConfig,
    decoder: ModelSpec,
    mut theta: Vec<f64>,
    n_actions: usize,
) -> Result<ArlOutcome, AvrilError> {
    let cells: Vec<usize> = dataset
        .transitions
        .iter()
        .map(|tr| tr.state.index().map(|s| s * n_actions + tr.action))
        .collect::<Option<_>>()
        .ok_or_else(|| AvrilError::Input("tabular fitted-Q needs discrete states".into()))?;
    let mut counts = vec![0usize; theta.len()];
    for &c in &cells {
        counts[c] += 1;
    }
    let refreshes = config.n_sweeps.div_ceil(config.target_update_period);
    let mut residuals = Vec::with_capacity(refreshes);
    let mut sums = vec![0.0; theta.len()];
    for _ in 0..refreshes {
        let y = targets(&decoder, &theta, dataset, rewards, config.gamma)?;
        sums.fill(0.0);
        for (&c, yi) in cells.iter().zip(&y) {
            sums[c] += yi;
        }
        let mut gap: f64 = 0.0;
        for (c, q) in theta.iter_mut().enumerate() {
            if counts[c] > 0 {
                let fitted = sums[c] / counts[c] as f64;
                gap = gap.max((fitted - *q).abs());
                *q = fitted;
            }
        }
        if !gap.is_finite() {
            return Err(DiffError::NonFinite { term: "fitted_q" }.into());
        }
        residuals.push(gap);
    }
    Ok(ArlOutcome { decoder, theta, residuals })
}

fn fit_network(
    dataset: &Dataset,
    rewards: &[f64],
    config: &FittedQConfig,
    decoder: ModelSpec,
    mut theta: Vec<f64>,
) -> Result<ArlOutcome, AvrilError> {
    let b = config.batch_size.min(dataset.len());
    let mut adam = Adam::new(theta.len(), config.lr);
    let mut batcher = Batcher::new(dataset.len(), config.seed);
    let mut tape = Tape::default();
    let mut d_q = vec![0.0; dataset.n_actions];
    let mut residuals = Vec::new();
    let mut y = Vec::new();

    for sweep in 0..config.n_sweeps {
        if sweep % config.target_update_period == 0 {
            y = targets(&decoder, &theta, dataset, rewards, config.gamma)?;
            let mut gap: f64 = 0.0;
            for (tr, yi) in dataset.transitions.iter().zip(&y) {
                decoder.forward_tape(&theta, state_input(&tr.state), &mut tape)?;
                gap = gap.max((tape.output()[tr.action] - yi).abs());
            }
            residuals.push(gap);
        }
        let mut grad = vec![0.0; theta.len()];
        for &i in batcher.next_batch(b) {
            let tr = &dataset.transitions[i];
            let input = state_input(&tr.state);
            decoder.forward_tape(&theta, input, &mut tape)?;
            d_q.fill(0.0);
            d_q[tr.action] = (y[i] - tape.output()[tr.action]) / b as f64;
            decoder.backward(&theta, input, &tape, &d_q, &mut grad);
        }
        adam.step(&mut theta, &grad, true);
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(DiffError::NonFinite { term: "fitted_q" }.into());
        }
    }
    Ok(ArlOutcome { decoder, theta, residuals })
}
