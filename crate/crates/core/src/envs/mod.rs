//! Discrete-action environments with their experts and demonstration datasets.

mod cartpole;
mod dataset;
mod gridworld;
mod mdp;
mod spec;

pub use cartpole::{cartpole_step, CartPole, CartPoleState, ScriptedCartPoleExpert, CARTPOLE_MAX_STEPS};
pub use dataset::{
    build_dataset, occupancy_counts, read_demos, write_demos, Dataset, DemoError, Occupancy,
    Transition,
};
pub use gridworld::{GridAction, GridworldSpec};
pub use mdp::{bellman_backup, value_iteration, MdpSpec, QTable};
pub use spec::EnvSpec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{seeded_rng, SimRng};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid environment: {0}")]
    Invalid(String),
    #[error("q-values contain a NaN")]
    NanQValues,
    #[error("discount must satisfy 0 <= gamma < 1, got {0}")]
    Discount(f64),
}

/// An environment state: a tabular id or a real feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum State {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl State {
    pub fn index(&self) -> Option<usize> {
        match self {
            State::Discrete(s) => Some(*s),
            State::Continuous(_) => None,
        }
    }

    pub fn features(&self) -> Option<&[f64]> {
        match self {
            State::Discrete(_) => None,
            State::Continuous(x) => Some(x),
        }
    }
}

/// Shape of a state space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSpace {
    Discrete { n_states: usize },
    Continuous { dim: usize },
}

impl StateSpace {
    /// `n_states` for tabular spaces, feature dimension otherwise.
    pub fn dim(&self) -> usize {
        match *self {
            StateSpace::Discrete { n_states } => n_states,
            StateSpace::Continuous { dim } => dim,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, StateSpace::Discrete { .. })
    }

    pub fn contains(&self, state: &State) -> bool {
        match (self, state) {
            (StateSpace::Discrete { n_states }, State::Discrete(s)) => s < n_states,
            (StateSpace::Continuous { dim }, State::Continuous(x)) => x.len() == *dim,
            _ => false,
        }
    }
}

/// Outcome of one environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next: State,
    pub reward: f64,
    pub terminated: bool,
}

pub trait Environment: Sync {
    fn space(&self) -> StateSpace;
    fn n_actions(&self) -> usize;
    fn reset(&self, rng: &mut SimRng) -> State;
    fn step(&self, state: &State, action: usize, rng: &mut SimRng) -> StepResult;
}

/// A stochastic policy over a discrete action set.
pub trait Policy: Sync {
    fn probabilities(&self, state: &State) -> Vec<f64>;

    fn act(&self, state: &State, rng: &mut SimRng) -> usize {
        sample_index(&self.probabilities(state), rng)
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn probabilities(&self, state: &State) -> Vec<f64> {
        (**self).probabilities(state)
    }

    fn act(&self, state: &State, rng: &mut SimRng) -> usize {
        (**self).act(state, rng)
    }
}

/// Deterministic argmax of a wrapped policy, ties to the lowest index.
#[derive(Clone, Debug)]
pub struct Greedy<P>(pub P);

impl<P: Policy> Policy for Greedy<P> {
    fn probabilities(&self, state: &State) -> Vec<f64> {
        let probs = self.0.probabilities(state);
        let best = argmax(&probs);
        (0..probs.len()).map(|a| if a == best { 1.0 } else { 0.0 }).collect()
    }

    fn act(&self, state: &State, _rng: &mut SimRng) -> usize {
        argmax(&self.0.probabilities(state))
    }
}

/// Uniform random policy.
#[derive(Clone, Copy, Debug)]
pub struct UniformPolicy {
    pub n_actions: usize,
}

impl Policy for UniformPolicy {
    fn probabilities(&self, _state: &State) -> Vec<f64> {
        vec![1.0 / self.n_actions as f64; self.n_actions]
    }
}

/// Boltzmann policy over a fixed Q-table.
#[derive(Clone, Debug)]
pub struct BoltzmannTable {
    pub q: QTable,
    pub beta: f64,
}

impl Policy for BoltzmannTable {
    fn probabilities(&self, state: &State) -> Vec<f64> {
        let s = state.index().expect("tabular policy queried with a continuous state");
        boltzmann_policy(self.q.row(s), self.beta).expect("finite q-table")
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Softmax of `beta * q_values`, computed with max subtraction.
pub fn boltzmann_policy(q_values: &[f64], beta: f64) -> Result<Vec<f64>, EnvError> {
    if q_values.iter().any(|q| q.is_nan()) || beta.is_nan() {
        return Err(EnvError::NanQValues);
    }
    let max = q_values
        .iter()
        .map(|q| beta * q)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = q_values.iter().map(|q| (beta * q - max).exp()).collect();
    let z: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= z;
    }
    Ok(probs)
}

fn sample_index(probs: &[f64], rng: &mut SimRng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left a sliver above the cumulative sum
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// A recorded demonstration: visited states and the actions taken there.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub actions: Vec<usize>,
    pub terminated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub trajectory: Trajectory,
    /// Undiscounted sum of environment rewards.
    pub total_reward: f64,
}

/// Runs one episode of at most `max_steps` actions.
///
/// Every `(state, action)` pair is recorded before the step is taken, so a
/// terminating action is still part of the trajectory while the terminal
/// successor is not.
pub fn rollout<E, P>(env: &E, policy: &P, rng_seed: u64, max_steps: usize) -> Rollout
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    let mut rng = seeded_rng(rng_seed, 0);
    let mut state = env.reset(&mut rng);
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut total_reward = 0.0;
    let mut terminated = false;
    for _ in 0..max_steps {
        let action = policy.act(&state, &mut rng);
        let step = env.step(&state, action, &mut rng);
        states.push(state);
        actions.push(action);
        total_reward += step.reward;
        if step.terminated {
            terminated = true;
            break;
        }
        state = step.next;
    }
    Rollout {
        trajectory: Trajectory {
            states,
            actions,
            terminated,
        },
        total_reward,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boltzmann_symmetric_and_cold() {
        assert_eq!(boltzmann_policy(&[0.0, 0.0], 1.0).unwrap(), vec![0.5, 0.5]);
        let p = boltzmann_policy(&[3.0, -1.0, 7.5], 0.0).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn boltzmann_closed_form() {
        let p = boltzmann_policy(&[1.0, 0.0], 1.0).unwrap();
        assert!((p[0] - 0.73106).abs() < 1e-5);
        assert!((p[1] - 0.26894).abs() < 1e-5);
    }

    #[test]
    fn boltzmann_rejects_nan_and_survives_overflow() {
        assert_eq!(boltzmann_policy(&[f64::NAN, 0.0], 1.0), Err(EnvError::NanQValues));
        let p = boltzmann_policy(&[1000.0, 999.0], 5.0).unwrap();
        assert!(p.iter().all(|x| x.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn state_json_shape() {
        assert_eq!(serde_json::to_string(&State::Discrete(3)).unwrap(), "3");
        assert_eq!(
            serde_json::to_string(&State::Continuous(vec![0.5, -1.0])).unwrap(),
            "[0.5,-1.0]"
        );
    }
}
