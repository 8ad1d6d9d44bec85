mod common;

use avril_core::envs::{
    bellman_backup, read_demos, rollout, value_iteration, write_demos, EnvSpec, Environment, GridworldSpec, State,
    StateSpace, UniformPolicy,
};
use avril_core::seeded_rng;
use common::expert_demos;
use proptest::prelude::*;

#[test]
fn gridworld_rows_are_distributions() {
    let mdp = GridworldSpec::default().to_mdp().unwrap();
    mdp.validate().unwrap();
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let row = mdp.row(s, a);
            assert!(row.iter().all(|p| *p >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12, "row ({s}, {a})");
        }
    }
}

#[test]
fn value_iteration_is_a_fixed_point() {
    let mdp = GridworldSpec::default().to_mdp().unwrap();
    let q = value_iteration(&mdp, 1e-10).unwrap();
    assert!(bellman_backup(&mdp, &q).sup_distance(&q) < 1e-9);
    // values rise towards the goal corner
    assert!(q.state_value(62) > q.state_value(0));
}

#[test]
fn rollouts_replay_from_their_seed() {
    for spec in [EnvSpec::default(), EnvSpec::Cartpole { max_steps: 200 }] {
        let env = spec.environment().unwrap();
        let policy = UniformPolicy { n_actions: spec.n_actions() };
        let a = rollout(env.as_ref(), &policy, 17, spec.max_steps());
        let b = rollout(env.as_ref(), &policy, 17, spec.max_steps());
        assert_eq!(a, b);
        assert!(a.trajectory.len() <= spec.max_steps());
    }
}

#[test]
fn gridworld_expert_reaches_the_goal() {
    let spec = EnvSpec::default();
    let demos = expert_demos(&spec, 20, 3);
    let goal = State::Discrete(63);
    assert!(demos.iter().all(|t| t.states.contains(&goal)));
}

#[test]
fn cartpole_reset_is_small_and_uniform_policy_fails() {
    let env = EnvSpec::Cartpole { max_steps: 500 }.environment().unwrap();
    let mut rng = seeded_rng(5, 0);
    let start = env.reset(&mut rng);
    assert!(start.features().unwrap().iter().all(|x| x.abs() < 0.05));
    let r = rollout(env.as_ref(), &UniformPolicy { n_actions: 2 }, 5, 500);
    assert!(r.trajectory.terminated);
    assert!(r.total_reward < 200.0);
}

#[test]
fn demos_round_trip() {
    for spec in [EnvSpec::default(), EnvSpec::Cartpole { max_steps: 50 }] {
        let demos = expert_demos(&spec, 4, 9);
        let mut bytes = Vec::new();
        write_demos(&mut bytes, &demos).unwrap();
        let back = read_demos(bytes.as_slice()).unwrap();
        assert_eq!(back.len(), demos.len());
        for (a, b) in demos.iter().zip(&back) {
            assert_eq!(a.states, b.states);
            assert_eq!(a.actions, b.actions);
        }
    }
}

#[test]
fn demos_reject_mixed_or_ragged_lines() {
    let mixed = "{\"states\":[0,1],\"actions\":[0,1]}\n{\"states\":[[0.5]],\"actions\":[0]}\n";
    assert!(read_demos(mixed.as_bytes()).is_err());
    let ragged = "{\"states\":[0,1],\"actions\":[0]}\n";
    assert!(read_demos(ragged.as_bytes()).is_err());
    assert!(read_demos("\n\n".as_bytes()).unwrap().is_empty());
}

#[test]
fn oversized_grids_are_rejected() {
    for (width, height) in [(usize::MAX, 2), (33, 32), (0, 4)] {
        let grid = GridworldSpec { width, height, ..GridworldSpec::default() };
        assert!(grid.validate().is_err(), "{width}x{height}");
    }
    assert!(GridworldSpec { width: 32, height: 32, ..GridworldSpec::default() }.validate().is_ok());
}

#[test]
fn space_membership() {
    let grid = StateSpace::Discrete { n_states: 4 };
    assert!(grid.contains(&State::Discrete(3)));
    assert!(!grid.contains(&State::Discrete(4)));
    assert!(!grid.contains(&State::Continuous(vec![0.0])));
    let cont = StateSpace::Continuous { dim: 2 };
    assert!(cont.contains(&State::Continuous(vec![0.0, 1.0])));
    assert!(!cont.contains(&State::Continuous(vec![0.0])));
}

proptest! {
    #[test]
    fn demo_reader_never_panics(text in ".{0,200}") {
        let _ = read_demos(text.as_bytes());
    }

    #[test]
    fn gridworld_steps_stay_on_the_board(s in 0usize..64, a in 0usize..4, seed in any::<u64>()) {
        let mdp = GridworldSpec::default().to_mdp().unwrap();
        let mut rng = seeded_rng(seed, 0);
        let step = mdp.step(&State::Discrete(s), a, &mut rng);
        let next = step.next.index().unwrap();
        prop_assert!(next < 64);
        prop_assert!(mdp.row(s, a)[next] > 0.0);
    }
}
