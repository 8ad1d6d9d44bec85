use serde::{Deserialize, Serialize};

use super::{
    value_iteration, BoltzmannTable, CartPole, EnvError, Environment, GridworldSpec, MdpSpec, Policy,
    ScriptedCartPoleExpert, StateSpace, CARTPOLE_MAX_STEPS,
};

fn default_expert_beta() -> f64 {
    5.0
}

fn default_grid_steps() -> usize {
    50
}

fn default_cartpole_steps() -> usize {
    CARTPOLE_MAX_STEPS
}

/// Environment description as stored in env spec files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Gridworld {
        #[serde(default)]
        grid: GridworldSpec,
        /// Inverse temperature of the Boltzmann expert over the optimal Q-table.
        #[serde(default = "default_expert_beta")]
        expert_beta: f64,
        #[serde(default = "default_grid_steps")]
        max_steps: usize,
    },
    Cartpole {
        #[serde(default = "default_cartpole_steps")]
        max_steps: usize,
    },
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec::Gridworld {
            grid: GridworldSpec::default(),
            expert_beta: default_expert_beta(),
            max_steps: default_grid_steps(),
        }
    }
}

impl EnvSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        match self {
            EnvSpec::Gridworld {
                grid,
                expert_beta,
                max_steps,
            } => {
                grid.validate()?;
                if !(expert_beta.is_finite() && *expert_beta >= 0.0) {
                    return Err(EnvError::Invalid(format!("expert_beta must be finite and >= 0, got {expert_beta}")));
                }
                if *max_steps == 0 {
                    return Err(EnvError::Invalid("max_steps must be positive".into()));
                }
                // dense transition tensor is n^2 * 4 reals
                if grid.n_states() > 4096 {
                    return Err(EnvError::Invalid(format!("grid of {} cells is too large", grid.n_states())));
                }
            }
            EnvSpec::Cartpole { max_steps } => {
                if *max_steps == 0 {
                    return Err(EnvError::Invalid("max_steps must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn space(&self) -> StateSpace {
        match self {
            EnvSpec::Gridworld { grid, .. } => StateSpace::Discrete {
                n_states: grid.n_states(),
            },
            EnvSpec::Cartpole { .. } => StateSpace::Continuous { dim: 4 },
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            EnvSpec::Gridworld { .. } => 4,
            EnvSpec::Cartpole { .. } => 2,
        }
    }

    pub fn max_steps(&self) -> usize {
        match self {
            EnvSpec::Gridworld { max_steps, .. } | EnvSpec::Cartpole { max_steps } => *max_steps,
        }
    }

    pub fn gridworld(&self) -> Option<&GridworldSpec> {
        match self {
            EnvSpec::Gridworld { grid, .. } => Some(grid),
            EnvSpec::Cartpole { .. } => None,
        }
    }

    pub fn mdp(&self) -> Result<Option<MdpSpec>, EnvError> {
        self.gridworld().map(GridworldSpec::to_mdp).transpose()
    }

    pub fn environment(&self) -> Result<Box<dyn Environment>, EnvError> {
        self.validate()?;
        Ok(match self {
            EnvSpec::Gridworld { grid, .. } => Box::new(grid.to_mdp()?),
            EnvSpec::Cartpole { .. } => Box::new(CartPole),
        })
    }

    /// Demonstrator: Boltzmann over value-iteration Q* for gridworlds, the PD rule for cart-pole.
    pub fn expert(&self) -> Result<Box<dyn Policy>, EnvError> {
        self.validate()?;
        Ok(match self {
            EnvSpec::Gridworld { grid, expert_beta, .. } => {
                let q = value_iteration(&grid.to_mdp()?, 1e-10)?;
                Box::new(BoltzmannTable { q, beta: *expert_beta })
            }
            EnvSpec::Cartpole { .. } => Box::new(ScriptedCartPoleExpert),
        })
    }
}
