//! Offline variational Bayesian inverse reinforcement learning.
//!
//! A Gaussian reward posterior (the encoder) and a Boltzmann Q-function
//! imitator (the decoder) are trained jointly from logged `(s, a, s', a')`
//! tuples, without any environment interaction or inner-loop RL solve.
//!
//! Where things live:
//! - [`envs`] holds the two environments and the demonstration format.
//! - [`diffcore`] provides hand-differentiated approximators over flat parameter vectors.
//! - [`avril`] defines the objective and the joint training loop.
//! - [`baselines`] has behavioural cloning and fitted-Q on a learned reward.
//! - [`eval`] scores imitators and draws the reward maps.
//! - [`cli`] wires everything into the `avril` binary.

pub mod avril;
pub mod baselines;
pub mod cli;
pub mod diffcore;
pub mod envs;
pub mod eval;

/// Random number generator used for every seeded computation in the crate.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Builds an independent generator for `(seed, stream)`.
pub fn seeded_rng(seed: u64, stream: u64) -> SimRng {
    use rand::SeedableRng;
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of the `index`-th member of a family rooted at `seed` (episodes, demonstrations).
pub fn derive_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64)
}
