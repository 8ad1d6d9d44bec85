use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, Policy, State, StateSpace, StepResult};
use crate::SimRng;

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
/// Half the pole length.
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_LENGTH;
const FORCE: f64 = 10.0;
const DT: f64 = 0.02;
const ANGLE_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
const POSITION_LIMIT: f64 = 2.4;

/// Episode length cap.
pub const CARTPOLE_MAX_STEPS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartPoleState {
    pub cart_position: f64,
    pub cart_velocity: f64,
    pub pole_angle: f64,
    pub pole_angular_velocity: f64,
}

impl CartPoleState {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.cart_position, self.cart_velocity, self.pole_angle, self.pole_angular_velocity]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            cart_position: x[0],
            cart_velocity: x[1],
            pole_angle: x[2],
            pole_angular_velocity: x[3],
        }
    }

    pub fn in_bounds(&self) -> bool {
        self.cart_position.abs() <= POSITION_LIMIT && self.pole_angle.abs() <= ANGLE_LIMIT
    }
}

/// One explicit-Euler step of the frictionless cart-pole; action 1 pushes right.
///
/// The episode terminates when either the input or the resulting state is
/// outside the angle/position limits.
pub fn cartpole_step(state: CartPoleState, action: usize) -> (CartPoleState, bool) {
    let force = if action == 1 { FORCE } else { -FORCE };
    let (sin, cos) = state.pole_angle.sin_cos();
    let omega = state.pole_angular_velocity;
    let temp = (force + POLE_MASS_LENGTH * omega * omega * sin) / TOTAL_MASS;
    let angular_acc =
        (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
    let cart_acc = temp - POLE_MASS_LENGTH * angular_acc * cos / TOTAL_MASS;
    let next = CartPoleState {
        cart_position: state.cart_position + DT * state.cart_velocity,
        cart_velocity: state.cart_velocity + DT * cart_acc,
        pole_angle: state.pole_angle + DT * omega,
        pole_angular_velocity: omega + DT * angular_acc,
    };
    let terminated = !state.in_bounds() || !next.in_bounds();
    (next, terminated)
}

/// Cart-pole balancing with +1 reward per step, including the failing one.
#[derive(Clone, Copy, Debug, Default)]
pub struct CartPole;

impl Environment for CartPole {
    fn space(&self) -> StateSpace {
        StateSpace::Continuous { dim: 4 }
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn reset(&self, rng: &mut SimRng) -> State {
        State::Continuous((0..4).map(|_| rng.gen_range(-0.05..0.05)).collect())
    }

    fn step(&self, state: &State, action: usize, _rng: &mut SimRng) -> StepResult {
        let x = state.features().expect("cart-pole stepped with a tabular state");
        let (next, terminated) = cartpole_step(CartPoleState::from_slice(x), action);
        StepResult {
            next: State::Continuous(next.to_vec()),
            reward: 1.0,
            terminated,
        }
    }
}

/// PD rule on pole angle and angular velocity.
///
/// Pushes right when `angle + 0.5 * angular_velocity > 0`; an exact zero
/// pushes left.
#[derive(Clone, Copy, Debug, Default)]
pub struct ScriptedCartPoleExpert;

impl ScriptedCartPoleExpert {
    const DERIVATIVE_GAIN: f64 = 0.5;

    pub fn action(&self, state: &CartPoleState) -> usize {
        let signal = state.pole_angle + Self::DERIVATIVE_GAIN * state.pole_angular_velocity;
        usize::from(signal > 0.0)
    }
}

impl Policy for ScriptedCartPoleExpert {
    fn probabilities(&self, state: &State) -> Vec<f64> {
        let a = self.act(state, &mut crate::seeded_rng(0, 0));
        let mut p = vec![0.0; 2];
        p[a] = 1.0;
        p
    }

    fn act(&self, state: &State, _rng: &mut SimRng) -> usize {
        let x = state.features().expect("cart-pole expert needs a continuous state");
        self.action(&CartPoleState::from_slice(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::rollout;

    /// Accelerations from the 2x2 mass matrix of a cart carrying a uniform rod,
    /// solved by Cramer's rule.
    fn reference_step(s: CartPoleState, force: f64) -> CartPoleState {
        let (m, mc, l, g, dt) = (0.1, 1.0, 0.5, 9.8, 0.02);
        let th = s.pole_angle;
        let w = s.pole_angular_velocity;
        // [ (m+mc)      m l cos ] [xdd ]   [ F + m l w^2 sin ]
        // [ m l cos   4/3 m l^2 ] [thdd] = [ m g l sin       ]
        let a11 = m + mc;
        let a12 = m * l * th.cos();
        let a21 = a12;
        let a22 = 4.0 / 3.0 * m * l * l;
        let b1 = force + m * l * w * w * th.sin();
        let b2 = m * g * l * th.sin();
        let det = a11 * a22 - a12 * a21;
        let xdd = (b1 * a22 - a12 * b2) / det;
        let thdd = (a11 * b2 - a21 * b1) / det;
        CartPoleState {
            cart_position: s.cart_position + dt * s.cart_velocity,
            cart_velocity: s.cart_velocity + dt * xdd,
            pole_angle: th + dt * w,
            pole_angular_velocity: w + dt * thdd,
        }
    }

    #[test]
    fn matches_mass_matrix_derivation() {
        let states = [
            CartPoleState { cart_position: 0.0, cart_velocity: 0.0, pole_angle: 0.0, pole_angular_velocity: 0.0 },
            CartPoleState { cart_position: 0.3, cart_velocity: -0.4, pole_angle: 0.15, pole_angular_velocity: 0.9 },
            CartPoleState { cart_position: -1.1, cart_velocity: 1.2, pole_angle: -0.2, pole_angular_velocity: -1.5 },
        ];
        for s in states {
            for (action, force) in [(0, -10.0), (1, 10.0)] {
                let (got, _) = cartpole_step(s, action);
                let want = reference_step(s, force);
                for (a, b) in got.to_vec().iter().zip(want.to_vec()) {
                    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn tilted_past_limit_terminates() {
        let s = CartPoleState {
            cart_position: 0.0,
            cart_velocity: 0.0,
            pole_angle: 13f64.to_radians(),
            pole_angular_velocity: 0.0,
        };
        assert!(cartpole_step(s, 0).1);
        assert!(cartpole_step(s, 1).1);
    }

    #[test]
    fn dynamics_are_mirror_symmetric() {
        let s = CartPoleState { cart_position: 0.2, cart_velocity: -0.1, pole_angle: 0.05, pole_angular_velocity: 0.3 };
        let m = CartPoleState {
            cart_position: -s.cart_position,
            cart_velocity: -s.cart_velocity,
            pole_angle: -s.pole_angle,
            pole_angular_velocity: -s.pole_angular_velocity,
        };
        let (a, _) = cartpole_step(s, 1);
        let (b, _) = cartpole_step(m, 0);
        for (x, y) in a.to_vec().iter().zip(b.to_vec()) {
            assert!((x + y).abs() < 1e-15);
        }
    }

    #[test]
    fn expert_rule_and_tie_break() {
        let e = ScriptedCartPoleExpert;
        let falling_right = CartPoleState { cart_position: 0.0, cart_velocity: 0.0, pole_angle: 0.05, pole_angular_velocity: 0.2 };
        assert_eq!(e.action(&falling_right), 1);
        let upright = CartPoleState { cart_position: 0.0, cart_velocity: 0.0, pole_angle: 0.0, pole_angular_velocity: 0.0 };
        assert_eq!(e.action(&upright), 0);
    }

    #[test]
    fn expert_balances() {
        let total: f64 = (0..300)
            .map(|i| rollout(&CartPole, &ScriptedCartPoleExpert, i, CARTPOLE_MAX_STEPS).total_reward)
            .sum();
        assert!(total / 300.0 >= 475.0);
    }
}
