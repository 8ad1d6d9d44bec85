//! Shared helpers for the integration tests: a finite-difference oracle,
//! demonstration builders and random datasets.
#![allow(dead_code)]

use std::io::Write;

use avril_core::derive_seed;
use avril_core::envs::{build_dataset, rollout, Dataset, EnvSpec, State, StateSpace, Trajectory, Transition};
use rand::Rng;

/// Central differences of `f` at `x` with step `h` in every coordinate.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// First coordinate where `|a - b| > rtol * max(|a|, |b|) + atol`, if any.
pub fn first_mismatch(analytic: &[f64], numeric: &[f64], rtol: f64, atol: f64) -> Option<(usize, f64, f64)> {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .enumerate()
        .find(|(_, (a, b))| (*a - *b).abs() > rtol * a.abs().max(b.abs()) + atol)
        .map(|(i, (a, b))| (i, *a, *b))
}

/// Expert demonstrations for `spec`, trajectory `i` seeded from `(seed, i)`.
pub fn expert_demos(spec: &EnvSpec, n: usize, seed: u64) -> Vec<Trajectory> {
    let env = spec.environment().unwrap();
    let expert = spec.expert().unwrap();
    (0..n)
        .map(|i| rollout(env.as_ref(), expert.as_ref(), derive_seed(seed, i), spec.max_steps()).trajectory)
        .collect()
}

pub fn dataset(spec: &EnvSpec, trajectories: &[Trajectory]) -> Dataset {
    build_dataset(trajectories, spec.space(), spec.n_actions()).unwrap()
}

fn random_state<R: Rng>(space: StateSpace, rng: &mut R) -> State {
    match space {
        StateSpace::Discrete { n_states } => State::Discrete(rng.gen_range(0..n_states)),
        StateSpace::Continuous { dim } => State::Continuous((0..dim).map(|_| rng.gen_range(-1.5..1.5)).collect()),
    }
}

/// `n` tuples with independent uniformly drawn states and actions.
pub fn random_dataset<R: Rng>(space: StateSpace, n_actions: usize, n: usize, rng: &mut R) -> Dataset {
    let transitions = (0..n)
        .map(|_| Transition {
            state: random_state(space, rng),
            action: rng.gen_range(0..n_actions),
            next_state: random_state(space, rng),
            next_action: rng.gen_range(0..n_actions),
        })
        .collect();
    Dataset {
        transitions,
        space,
        n_actions,
    }
}

/// Writes straight to the process stderr so the line shows even under output capture.
pub fn report(line: &str) {
    let mut err = std::io::stderr();
    err.write_all(format!("{line}\n").as_bytes()).unwrap();
    err.flush().unwrap();
}
