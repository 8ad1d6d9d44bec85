//! Joint variational reward posterior and Q-function imitator.
//!
//! The encoder `q_phi` maps a state (optionally with an action) to a
//! Gaussian over the reward; the decoder `Q_theta` maps a state to
//! per-action values whose `beta`-softmax is the imitator policy. Both are
//! trained together by ascending
//!
//! ```text
//! F = sum_D log softmax_beta(Q(s))[a]
//!     - KL(q(R(s)) || N(0, 1))
//!     + lambda * log q(Q(s, a) - gamma * Q(s', a'))
//! ```
//!
//! where the last term asks the reward implied by the Q-function to be
//! likely under the posterior.

mod objective;
mod train;

pub use objective::{log_softmax, BatchObjective, SparsityIdentityReport};
pub use train::{train, train_observed, Divergence, TrainOutcome, TrainingLog};
pub(crate) use train::{Batcher, THETA_STREAM};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{DiffError, Input, Layout, ModelSpec, ParamVector};
use crate::envs::{boltzmann_policy, Policy, State, StateSpace};
use crate::seeded_rng;

/// What the reward (and hence the encoder) is a function of.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardInput {
    #[default]
    StateOnly,
    StateAction,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderForm {
    #[default]
    Mlp,
    Tabular,
    Linear,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderForm {
    #[default]
    Mlp,
    Tabular,
}

/// Hyperparameters of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AvrilConfig {
    /// Boltzmann rationality of the demonstrator.
    pub beta: f64,
    pub gamma: f64,
    /// Weight of the implied-reward consistency term.
    pub lambda: f64,
    pub reward_input: RewardInput,
    pub encoder_form: EncoderForm,
    pub decoder_form: DecoderForm,
    pub lr: f64,
    pub batch_size: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Iterations averaged on each side of the convergence test.
    pub convergence_window: usize,
    /// Stop once the windowed mean objective changes by less than this
    /// fraction; zero disables the test.
    pub convergence_tol: f64,
}

impl Default for AvrilConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            gamma: 0.99,
            lambda: 1.0,
            reward_input: RewardInput::StateOnly,
            encoder_form: EncoderForm::Mlp,
            decoder_form: DecoderForm::Mlp,
            lr: 1e-4,
            batch_size: 64,
            max_iters: 50_000,
            seed: 0,
            convergence_window: 50,
            convergence_tol: 1e-6,
        }
    }
}

impl AvrilConfig {
    pub fn validate(&self) -> Result<(), AvrilError> {
        let bad = |field: &'static str, message: String| Err(AvrilError::Config { field, message });
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad("beta", format!("must be finite and >= 0, got {}", self.beta));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", format!("must be in [0, 1), got {}", self.gamma));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda", format!("must be finite and >= 0, got {}", self.lambda));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr", format!("must be finite and > 0, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        if self.convergence_window == 0 {
            return bad("convergence_window", "must be at least 1".into());
        }
        if !(self.convergence_tol.is_finite() && self.convergence_tol >= 0.0) {
            return bad("convergence_tol", format!("must be finite and >= 0, got {}", self.convergence_tol));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AvrilError {
    #[error("config field `{field}` {message}")]
    Config { field: &'static str, message: String },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("training diverged at iteration {} ({} is not finite)", .0.iter, .0.term)]
    Diverged(Box<Divergence>),
}

/// Gaussian posterior over the reward at one query point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardPosterior {
    pub mean: f64,
    pub variance: f64,
}

impl RewardPosterior {
    fn from_head(mean: f64, log_variance: f64) -> Result<Self, AvrilError> {
        let variance = log_variance.exp();
        if !(mean.is_finite() && variance.is_finite() && variance > 0.0) {
            return Err(DiffError::NonFinite { term: "reward posterior" }.into());
        }
        Ok(Self { mean, variance })
    }

    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Per-term values of the objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub log_likelihood: f64,
    pub kl: f64,
    pub constraint: f64,
    /// `log_likelihood - kl + lambda * constraint`.
    pub total: f64,
}

impl ObjectiveBreakdown {
    pub fn new(log_likelihood: f64, kl: f64, constraint: f64, lambda: f64) -> Self {
        Self {
            log_likelihood,
            kl,
            constraint,
            total: log_likelihood - kl + lambda * constraint,
        }
    }

    fn check_finite(&self) -> Result<(), DiffError> {
        for (term, v) in [
            ("log_likelihood", self.log_likelihood),
            ("kl", self.kl),
            ("constraint", self.constraint),
            ("total", self.total),
        ] {
            if !v.is_finite() {
                return Err(DiffError::NonFinite { term });
            }
        }
        Ok(())
    }
}

/// Decoder architecture for a given state space.
pub fn decoder_spec(form: DecoderForm, space: StateSpace, n_actions: usize) -> Result<ModelSpec, AvrilError> {
    let spec = match (form, space) {
        (DecoderForm::Tabular, StateSpace::Discrete { n_states }) => ModelSpec::Tabular {
            rows: n_states,
            cols: n_actions,
        },
        (DecoderForm::Tabular, StateSpace::Continuous { .. }) => {
            return Err(AvrilError::Input("a tabular decoder needs a discrete state space".into()))
        }
        (DecoderForm::Mlp, space) => ModelSpec::mlp(space.dim(), n_actions),
    };
    spec.validate()?;
    Ok(spec)
}

/// Encoder architecture; the two outputs are the posterior mean and log-variance.
pub fn encoder_spec(
    form: EncoderForm,
    reward_input: RewardInput,
    space: StateSpace,
    n_actions: usize,
) -> Result<ModelSpec, AvrilError> {
    let extra = match reward_input {
        RewardInput::StateOnly => 0,
        RewardInput::StateAction => n_actions,
    };
    let spec = match (form, space) {
        (EncoderForm::Tabular, StateSpace::Discrete { n_states }) => ModelSpec::Tabular {
            rows: match reward_input {
                RewardInput::StateOnly => n_states,
                RewardInput::StateAction => n_states * n_actions,
            },
            cols: 2,
        },
        (EncoderForm::Tabular, StateSpace::Continuous { .. }) => {
            return Err(AvrilError::Input("a tabular encoder needs a discrete state space".into()))
        }
        (EncoderForm::Mlp, space) => ModelSpec::mlp(space.dim() + extra, 2),
        (EncoderForm::Linear, space) => ModelSpec::Linear {
            input_dim: space.dim() + extra,
            output_dim: 2,
        },
    };
    spec.validate()?;
    Ok(spec)
}

/// Input of a state to a decoder: a row index for tabular ids, features otherwise.
pub fn state_input(state: &State) -> Input<'_> {
    match state {
        State::Discrete(s) => Input::Index(*s),
        State::Continuous(x) => Input::Dense(x),
    }
}

/// Encoder and decoder architectures plus the layout of their joint parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvrilModel {
    pub config: AvrilConfig,
    pub space: StateSpace,
    pub n_actions: usize,
    pub encoder: ModelSpec,
    pub decoder: ModelSpec,
}

impl AvrilModel {
    pub fn new(config: AvrilConfig, space: StateSpace, n_actions: usize) -> Result<Self, AvrilError> {
        config.validate()?;
        if n_actions == 0 {
            return Err(AvrilError::Input("at least one action is required".into()));
        }
        let encoder = encoder_spec(config.encoder_form, config.reward_input, space, n_actions)?;
        let decoder = decoder_spec(config.decoder_form, space, n_actions)?;
        Ok(Self {
            config,
            space,
            n_actions,
            encoder,
            decoder,
        })
    }

    pub fn layout(&self) -> Layout {
        Layout::of_models(&[("encoder", &self.encoder), ("decoder", &self.decoder)])
    }

    pub fn n_params(&self) -> usize {
        self.encoder.n_params() + self.decoder.n_params()
    }

    /// Fresh parameters; encoder and decoder draw from separate seeded streams.
    pub fn init_params(&self) -> ParamVector {
        let mut values = self.encoder.init(&mut seeded_rng(self.config.seed, train::PHI_STREAM));
        values.extend(self.decoder.init(&mut seeded_rng(self.config.seed, train::THETA_STREAM)));
        ParamVector::new(values, self.layout()).expect("layout matches model sizes")
    }

    /// Encoder slice of the joint parameter vector.
    pub fn phi<'p>(&self, params: &'p [f64]) -> &'p [f64] {
        &params[..self.encoder.n_params()]
    }

    /// Decoder slice of the joint parameter vector.
    pub fn theta<'p>(&self, params: &'p [f64]) -> &'p [f64] {
        &params[self.encoder.n_params()..]
    }

    fn check_params(&self, params: &[f64]) -> Result<(), AvrilError> {
        if params.len() != self.n_params() {
            return Err(DiffError::Dimension {
                what: "parameters",
                expected: self.n_params(),
                got: params.len(),
            }
            .into());
        }
        Ok(())
    }

    fn check_state(&self, state: &State) -> Result<(), AvrilError> {
        if !self.space.contains(state) {
            return Err(AvrilError::Input(format!("state {state:?} is not in {:?}", self.space)));
        }
        Ok(())
    }

    /// Encoder input for the reward at `(state, action)`; the action is
    /// ignored for state-only rewards.
    pub(crate) fn encoder_input<'a>(&self, state: &'a State, action: usize, buf: &'a mut Vec<f64>) -> Input<'a> {
        match (self.config.reward_input, &self.encoder, state) {
            (RewardInput::StateOnly, _, s) => state_input(s),
            (RewardInput::StateAction, ModelSpec::Tabular { .. }, State::Discrete(s)) => {
                Input::Index(s * self.n_actions + action)
            }
            (RewardInput::StateAction, _, s) => {
                buf.clear();
                match s {
                    State::Discrete(i) => {
                        buf.resize(self.space.dim(), 0.0);
                        buf[*i] = 1.0;
                    }
                    State::Continuous(x) => buf.extend_from_slice(x),
                }
                let base = buf.len();
                buf.resize(base + self.n_actions, 0.0);
                buf[base + action] = 1.0;
                Input::Dense(buf)
            }
        }
    }

    /// Posterior over the reward at `state` (and `action` for state-action rewards).
    pub fn encode(&self, params: &[f64], state: &State, action: Option<usize>) -> Result<RewardPosterior, AvrilError> {
        self.check_params(params)?;
        self.check_state(state)?;
        let action = match (self.config.reward_input, action) {
            (RewardInput::StateOnly, None) => 0,
            (RewardInput::StateAction, Some(a)) if a < self.n_actions => a,
            (RewardInput::StateAction, Some(a)) => {
                return Err(AvrilError::Input(format!("action {a} out of range")))
            }
            (RewardInput::StateOnly, Some(_)) => {
                return Err(AvrilError::Input("state-only reward queried with an action".into()))
            }
            (RewardInput::StateAction, None) => {
                return Err(AvrilError::Input("state-action reward queried without an action".into()))
            }
        };
        let mut buf = Vec::new();
        let input = self.encoder_input(state, action, &mut buf);
        let out = self.encoder.forward(self.phi(params), input)?;
        RewardPosterior::from_head(out[0], out[1])
    }

    /// Decoder Q-values at `state`.
    pub fn q_values(&self, params: &[f64], state: &State) -> Result<Vec<f64>, AvrilError> {
        self.check_params(params)?;
        self.check_state(state)?;
        Ok(self.decoder.forward(self.theta(params), state_input(state))?)
    }

    /// `Q(s, a) - gamma * Q(s', a')`.
    pub fn implied_reward(&self, params: &[f64], tr: &crate::envs::Transition) -> Result<f64, AvrilError> {
        let q = self.q_values(params, &tr.state)?;
        let q_next = self.q_values(params, &tr.next_state)?;
        Ok(q[tr.action] - self.config.gamma * q_next[tr.next_action])
    }

    /// Boltzmann imitator built from the decoder part of `params`.
    pub fn imitator_policy(&self, params: &[f64]) -> QPolicy {
        QPolicy {
            decoder: self.decoder.clone(),
            theta: self.theta(params).to_vec(),
            beta: self.config.beta,
        }
    }
}

/// Softmax-of-Q policy over a decoder; wrap in [`crate::envs::Greedy`] for deployment.
#[derive(Clone, Debug, PartialEq)]
pub struct QPolicy {
    pub decoder: ModelSpec,
    pub theta: Vec<f64>,
    pub beta: f64,
}

impl QPolicy {
    pub fn q_values(&self, state: &State) -> Result<Vec<f64>, DiffError> {
        self.decoder.forward(&self.theta, state_input(state))
    }
}

impl Policy for QPolicy {
    fn probabilities(&self, state: &State) -> Vec<f64> {
        let q = self.q_values(state).expect("state matches the decoder input");
        boltzmann_policy(&q, self.beta).expect("finite q-values")
    }
}
