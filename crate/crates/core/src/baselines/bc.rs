use serde::{Deserialize, Serialize};

use crate::avril::{
    decoder_spec, log_softmax, state_input, AvrilError, Batcher, DecoderForm, QPolicy, THETA_STREAM,
};
use crate::diffcore::{Adam, DiffError, ModelSpec, Tape};
use crate::envs::Dataset;
use crate::seeded_rng;

/// Behavioural cloning hyperparameters.
///
/// Seeds and batching match [`crate::avril::AvrilConfig`], so a cloning run
/// and a joint run with the same seed start from the same decoder and see
/// the same minibatches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcConfig {
    pub decoder_form: DecoderForm,
    pub beta: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            decoder_form: DecoderForm::Mlp,
            beta: 1.0,
            lr: 1e-4,
            batch_size: 64,
            iters: 50_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BcOutcome {
    pub decoder: ModelSpec,
    pub theta: Vec<f64>,
    /// Scaled minibatch log-likelihood before each update.
    pub log: Vec<f64>,
}

impl BcOutcome {
    pub fn policy(&self, beta: f64) -> QPolicy {
        QPolicy {
            decoder: self.decoder.clone(),
            theta: self.theta.clone(),
            beta,
        }
    }
}

pub fn bc_train(dataset: &Dataset, config: &BcConfig) -> Result<BcOutcome, AvrilError> {
    bc_train_observed(dataset, config, |_, _| {})
}

/// Maximises the Boltzmann log-likelihood of the demonstrated actions alone.
///
/// `observer` sees the parameters after every update.
pub fn bc_train_observed<F>(dataset: &Dataset, config: &BcConfig, mut observer: F) -> Result<BcOutcome, AvrilError>
where
    F: FnMut(usize, &[f64]),
{
    if dataset.is_empty() {
        return Err(AvrilError::Input("dataset has no transitions".into()));
    }
    if config.batch_size == 0 || config.batch_size > dataset.len() {
        return Err(AvrilError::Config {
            field: "batch_size",
            message: format!("must be in 1..={}, got {}", dataset.len(), config.batch_size),
        });
    }
    let decoder = decoder_spec(config.decoder_form, dataset.space, dataset.n_actions)?;
    let mut theta = decoder.init(&mut seeded_rng(config.seed, THETA_STREAM));
    let mut adam = Adam::new(theta.len(), config.lr);
    let mut batcher = Batcher::new(dataset.len(), config.seed);
    let scale = dataset.len() as f64 / config.batch_size as f64;
    let mut tape = Tape::default();
    let mut d_q = vec![0.0; dataset.n_actions];
    let mut log = Vec::with_capacity(config.iters);

    for iter in 0..config.iters {
        let mut grad = vec![0.0; theta.len()];
        let mut log_likelihood = 0.0;
        for &i in batcher.next_batch(config.batch_size) {
            let tr = &dataset.transitions[i];
            let input = state_input(&tr.state);
            decoder.forward_tape(&theta, input, &mut tape)?;
            let log_probs = log_softmax(tape.output(), config.beta);
            log_likelihood += log_probs[tr.action];
            for (b, (d, lp)) in d_q.iter_mut().zip(&log_probs).enumerate() {
                let target = if b == tr.action { 1.0 } else { 0.0 };
                *d = config.beta * (target - lp.exp());
            }
            decoder.backward(&theta, input, &tape, &d_q, &mut grad);
        }
        for g in &mut grad {
            *g *= scale;
        }
        if !log_likelihood.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(DiffError::NonFinite { term: "log_likelihood" }.into());
        }
        log.push(log_likelihood * scale);
        adam.step(&mut theta, &grad, true);
        observer(iter, &theta);
    }
    Ok(BcOutcome { decoder, theta, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Policy, State, StateSpace, Transition};

    #[test]
    fn single_action_becomes_certain() {
        let tr = Transition {
            state: State::Discrete(0),
            action: 1,
            next_state: State::Discrete(0),
            next_action: 1,
        };
        let dataset = Dataset {
            transitions: vec![tr],
            space: StateSpace::Discrete { n_states: 1 },
            n_actions: 2,
        };
        let config = BcConfig {
            decoder_form: DecoderForm::Tabular,
            lr: 0.05,
            batch_size: 1,
            iters: 2000,
            ..BcConfig::default()
        };
        let out = bc_train(&dataset, &config).unwrap();
        let p = out.policy(1.0).probabilities(&State::Discrete(0));
        assert!(p[1] >= 0.99, "{p:?}");
    }
}
