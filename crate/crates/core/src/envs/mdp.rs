use rand::Rng;

use super::{EnvError, Environment, State, StateSpace, StepResult};
use crate::SimRng;

/// A finite MDP with state-only reward collected on entering a state.
#[derive(Clone, Debug, PartialEq)]
pub struct MdpSpec {
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-major `[s][a][s']` transition probabilities.
    pub transition: Vec<f64>,
    /// Reward received on entering each state; hidden from learners.
    pub reward: Vec<f64>,
    pub gamma: f64,
    pub initial: Vec<f64>,
    pub terminal: Vec<bool>,
}

impl MdpSpec {
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let (ns, na) = (self.n_states, self.n_actions);
        if ns == 0 || na == 0 {
            return Err(EnvError::Invalid("empty state or action set".into()));
        }
        if self.transition.len() != ns * na * ns {
            return Err(EnvError::Invalid(format!(
                "transition tensor has {} entries, expected {}",
                self.transition.len(),
                ns * na * ns
            )));
        }
        if self.reward.len() != ns || self.initial.len() != ns || self.terminal.len() != ns {
            return Err(EnvError::Invalid("per-state vectors must have n_states entries".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(EnvError::Discount(self.gamma));
        }
        for s in 0..ns {
            for a in 0..na {
                let row = self.row(s, a);
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(EnvError::Invalid(format!("row ({s},{a}) has a probability outside [0,1]")));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(EnvError::Invalid(format!("row ({s},{a}) sums to {total}")));
                }
            }
        }
        if (self.initial.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(EnvError::Invalid("initial distribution does not sum to 1".into()));
        }
        if self.reward.iter().any(|r| !r.is_finite()) {
            return Err(EnvError::Invalid("non-finite reward".into()));
        }
        Ok(())
    }
}

impl Environment for MdpSpec {
    fn space(&self) -> StateSpace {
        StateSpace::Discrete {
            n_states: self.n_states,
        }
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn reset(&self, rng: &mut SimRng) -> State {
        State::Discrete(sample(&self.initial, rng))
    }

    fn step(&self, state: &State, action: usize, rng: &mut SimRng) -> StepResult {
        let s = state.index().expect("tabular MDP stepped with a continuous state");
        let next = sample(self.row(s, action), rng);
        StepResult {
            next: State::Discrete(next),
            reward: self.reward[next],
            terminated: self.terminal[next],
        }
    }
}

fn sample(probs: &[f64], rng: &mut SimRng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Dense `n_states x n_actions` table of action values.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn state_value(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy(&self, s: usize) -> usize {
        super::argmax(self.row(s))
    }

    /// `max |self - other|`.
    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One hard Bellman optimality backup.
///
/// Entering `s'` pays `reward[s']`; terminal successors contribute no
/// continuation value and terminal rows are pinned to zero.
pub fn bellman_backup(mdp: &MdpSpec, q: &QTable) -> QTable {
    let values_next: Vec<f64> = (0..mdp.n_states)
        .map(|s| if mdp.terminal[s] { 0.0 } else { q.state_value(s) })
        .collect();
    let mut out = QTable::zeros(mdp.n_states, mdp.n_actions);
    for s in 0..mdp.n_states {
        if mdp.terminal[s] {
            continue;
        }
        for a in 0..mdp.n_actions {
            out.values[s * mdp.n_actions + a] = mdp
                .row(s, a)
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(next, p)| p * (mdp.reward[next] + mdp.gamma * values_next[next]))
                .sum();
        }
    }
    out
}

/// Iterates the Bellman backup until the returned table has sup-norm residual below `tol`.
pub fn value_iteration(mdp: &MdpSpec, tol: f64) -> Result<QTable, EnvError> {
    if !(0.0..1.0).contains(&mdp.gamma) {
        return Err(EnvError::Discount(mdp.gamma));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(EnvError::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    mdp.validate()?;
    let mut q = QTable::zeros(mdp.n_states, mdp.n_actions);
    loop {
        let next = bellman_backup(mdp, &q);
        // residual(next) <= gamma * |next - q|
        if next.sup_distance(&q) < tol {
            return Ok(next);
        }
        q = next;
    }
}
