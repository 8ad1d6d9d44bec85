mod common;

use avril_core::avril::{AvrilConfig, AvrilModel, EncoderForm};
use avril_core::envs::{EnvSpec, Policy, State, StateSpace, Transition, UniformPolicy};
use avril_core::eval::{
    action_matching, average_precision, binary_auc, live_return, min_max_scale, reward_slice, spearman, EvalError,
    Grid,
};
use common::{dataset, expert_demos};
use proptest::prelude::*;

/// Puts all mass on a fixed action per tabular state.
struct Lookup(Vec<usize>, usize);

impl Policy for Lookup {
    fn probabilities(&self, state: &State) -> Vec<f64> {
        let mut p = vec![0.05 / (self.1 - 1) as f64; self.1];
        p[self.0[state.index().unwrap()]] = 0.95;
        p
    }
}

fn labelled(actions: &[usize]) -> Vec<Transition> {
    actions
        .iter()
        .enumerate()
        .map(|(s, &a)| Transition {
            state: State::Discrete(s),
            action: a,
            next_state: State::Discrete(s),
            next_action: a,
        })
        .collect()
}

#[test]
fn perfect_and_uninformative_policies() {
    let actions = [0, 1, 2, 1, 0, 2, 2, 1];
    let test = labelled(&actions);
    let perfect = action_matching(&Lookup(actions.to_vec(), 3), &test).unwrap();
    assert_eq!((perfect.acc, perfect.auc, perfect.aps), (1.0, 1.0, 1.0));
    let flat = action_matching(&UniformPolicy { n_actions: 3 }, &test).unwrap();
    assert_eq!(flat.auc, 0.5);
    // argmax of a flat row is action 0, present in 2 of 8 tuples
    assert_eq!(flat.acc, 0.25);
}

#[test]
fn matching_edge_cases() {
    assert!(matches!(action_matching(&UniformPolicy { n_actions: 2 }, &[]), Err(EvalError::EmptyTestSet)));
    let one_class = labelled(&[1, 1, 1]);
    assert!(matches!(action_matching(&UniformPolicy { n_actions: 2 }, &one_class), Err(EvalError::Undefined(_))));
    let out_of_range = labelled(&[0, 5]);
    assert!(action_matching(&UniformPolicy { n_actions: 3 }, &out_of_range).is_err());
    let sparse = action_matching(&Lookup(vec![0, 1, 0], 4), &labelled(&[0, 1, 0])).unwrap();
    assert_eq!(sparse.skipped_classes, vec![2, 3]);
}

#[test]
fn cartpole_expert_balances() {
    let spec = EnvSpec::Cartpole { max_steps: 500 };
    let env = spec.environment().unwrap();
    let expert = spec.expert().unwrap();
    let r = live_return(env.as_ref(), expert.as_ref(), 100, 500, 3);
    assert!(r.mean >= 475.0, "{}", r.mean);
    assert_eq!(r.returns.len(), 100);
}

#[test]
fn live_return_ignores_thread_count() {
    let spec = EnvSpec::default();
    let env = spec.environment().unwrap();
    let expert = spec.expert().unwrap();
    let a = live_return(env.as_ref(), expert.as_ref(), 64, 50, 21);
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| live_return(env.as_ref(), expert.as_ref(), 64, 50, 21));
    assert_eq!(a, b);
}

#[test]
fn grid_csv_layout() {
    let grid = Grid::scaled(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let mut buf = Vec::new();
    grid.write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "width,height\n3,2\n0,0.2,0.4\n0.6,0.8,1\n");
    assert_eq!(min_max_scale(&[2.0, 2.0]), vec![0.0, 0.0]);
}

#[test]
fn slices_need_continuous_models() {
    let spec = EnvSpec::default();
    let data = dataset(&spec, &expert_demos(&spec, 2, 1));
    let model = AvrilModel::new(AvrilConfig::default(), data.space, 4).unwrap();
    let p = model.init_params().values;
    assert!(reward_slice(&model, &p, &[0.0], 0, (0.0, 1.0), 5, None).is_err());

    let config = AvrilConfig { encoder_form: EncoderForm::Linear, ..AvrilConfig::default() };
    let model = AvrilModel::new(config, StateSpace::Continuous { dim: 4 }, 2).unwrap();
    let p = model.init_params().values;
    let rows = reward_slice(&model, &p, &[0.0; 4], 2, (-1.0, 1.0), 5, None).unwrap();
    assert_eq!(rows.iter().map(|r| r.value).collect::<Vec<_>>(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    // a linear mean head is affine along the slice
    let d1 = rows[1].mean - rows[0].mean;
    assert!(rows.windows(2).all(|w| ((w[1].mean - w[0].mean) - d1).abs() < 1e-12));
    assert!(reward_slice(&model, &p, &[0.0; 4], 4, (-1.0, 1.0), 5, None).is_err());
}

fn scores_and_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..30).prop_flat_map(|n| {
        (
            prop::collection::vec(prop_oneof![(-5i32..5).prop_map(f64::from), -10.0f64..10.0], n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #[test]
    fn auc_is_invariant_under_monotone_maps((scores, labels) in scores_and_labels()) {
        let auc = binary_auc(&scores, &labels);
        let mapped: Vec<f64> = scores.iter().map(|s| (0.3 * s).exp() * 2.0 + 1.0).collect();
        prop_assert_eq!(auc, binary_auc(&mapped, &labels));
        prop_assert_eq!(average_precision(&scores, &labels), average_precision(&mapped, &labels));
        if let Some(a) = auc {
            prop_assert!((0.0..=1.0).contains(&a));
            let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
            prop_assert!((binary_auc(&flipped, &labels).unwrap() - (1.0 - a)).abs() < 1e-12);
        }
    }

    #[test]
    fn average_precision_is_a_fraction((scores, labels) in scores_and_labels()) {
        match average_precision(&scores, &labels) {
            Some(ap) => prop_assert!(ap > 0.0 && ap <= 1.0),
            None => prop_assert!(labels.iter().all(|l| !l)),
        }
    }

    #[test]
    fn spearman_is_bounded(x in prop::collection::vec(-10.0f64..10.0, 3..40), seed in any::<u64>()) {
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v * ((seed >> (i % 64)) & 1) as f64).collect();
        if let Some(r) = spearman(&x, &y) {
            prop_assert!((-1.0..=1.0).contains(&r));
        }
        if let Some(r) = spearman(&x, &x) {
            prop_assert!((r - 1.0).abs() < 1e-12);
            let neg: Vec<f64> = x.iter().map(|v| -v.powi(3)).collect();
            prop_assert!((spearman(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_is_idempotent(values in prop::collection::vec(-1e6f64..1e6, 1..64)) {
        let once = min_max_scale(&values);
        prop_assert!(once.iter().all(|v| (0.0..=1.0).contains(v)));
        let twice = min_max_scale(&once);
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
