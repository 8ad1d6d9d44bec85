use serde::{Deserialize, Serialize};

use super::{EnvError, MdpSpec};

/// Compass moves; `North` decreases the row index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridAction {
    North = 0,
    South = 1,
    East = 2,
    West = 3,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [GridAction::North, GridAction::South, GridAction::East, GridAction::West];

    fn perpendicular(self) -> [GridAction; 2] {
        match self {
            GridAction::North | GridAction::South => [GridAction::East, GridAction::West],
            GridAction::East | GridAction::West => [GridAction::North, GridAction::South],
        }
    }
}

/// Slippery gridworld with absorbing goal cells.
///
/// Cells are numbered row-major, `id = row * width + col`. A move into the
/// border leaves the agent in place. With probability `slip_prob` the agent
/// instead moves to one of the two perpendicular neighbours, chosen
/// uniformly. Goal cells are absorbing and pay reward 1 each time they are
/// entered (including staying); every other cell pays `step_reward`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    pub slip_prob: f64,
    pub goal_cells: Vec<usize>,
    #[serde(default)]
    pub step_reward: f64,
    pub start_cell: usize,
    pub gamma: f64,
}

impl Default for GridworldSpec {
    fn default() -> Self {
        Self {
            width: 8,
            height: 8,
            slip_prob: 0.1,
            goal_cells: vec![63],
            step_reward: 0.0,
            start_cell: 0,
            gamma: 0.99,
        }
    }
}

impl GridworldSpec {
    pub const MAX_CELLS: usize = 1024;

    pub fn n_states(&self) -> usize {
        self.width.saturating_mul(self.height)
    }

    pub fn cell(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.width, cell / self.width)
    }

    pub fn is_goal(&self, cell: usize) -> bool {
        self.goal_cells.contains(&cell)
    }

    /// Deterministic destination of `action` from `cell`.
    pub fn neighbour(&self, cell: usize, action: GridAction) -> usize {
        let (col, row) = self.coords(cell);
        let (col, row) = match action {
            GridAction::North => (col, row.saturating_sub(1)),
            GridAction::South => (col, (row + 1).min(self.height - 1)),
            GridAction::East => ((col + 1).min(self.width - 1), row),
            GridAction::West => (col.saturating_sub(1), row),
        };
        self.cell(col, row)
    }

    /// Ground-truth state reward, one entry per cell.
    pub fn reward(&self) -> Vec<f64> {
        (0..self.n_states())
            .map(|s| if self.is_goal(s) { 1.0 } else { self.step_reward })
            .collect()
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.width == 0 || self.height == 0 {
            return Err(EnvError::Invalid("grid must be at least 1x1".into()));
        }
        // the dense transition tensor holds 4 * cells^2 probabilities
        if self.width.checked_mul(self.height).is_none_or(|n| n > Self::MAX_CELLS) {
            return Err(EnvError::Invalid(format!(
                "a {}x{} grid exceeds the {} cell limit",
                self.width,
                self.height,
                Self::MAX_CELLS
            )));
        }
        if !(0.0..1.0).contains(&self.slip_prob) {
            return Err(EnvError::Invalid(format!("slip_prob must be in [0,1), got {}", self.slip_prob)));
        }
        if self.goal_cells.is_empty() {
            return Err(EnvError::Invalid("at least one goal cell is required".into()));
        }
        let n = self.n_states();
        if let Some(g) = self.goal_cells.iter().find(|g| **g >= n) {
            return Err(EnvError::Invalid(format!("goal cell {g} outside a grid of {n} cells")));
        }
        if self.start_cell >= n {
            return Err(EnvError::Invalid(format!("start cell {} outside the grid", self.start_cell)));
        }
        if !self.step_reward.is_finite() {
            return Err(EnvError::Invalid("step_reward must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(EnvError::Discount(self.gamma));
        }
        Ok(())
    }

    pub fn to_mdp(&self) -> Result<MdpSpec, EnvError> {
        self.validate()?;
        let n = self.n_states();
        let na = GridAction::ALL.len();
        let mut transition = vec![0.0; n * na * n];
        for s in 0..n {
            for action in GridAction::ALL {
                let row = &mut transition[(s * na + action as usize) * n..][..n];
                if self.is_goal(s) {
                    row[s] = 1.0;
                    continue;
                }
                row[self.neighbour(s, action)] += 1.0 - self.slip_prob;
                for side in action.perpendicular() {
                    row[self.neighbour(s, side)] += self.slip_prob / 2.0;
                }
            }
        }
        let mut initial = vec![0.0; n];
        initial[self.start_cell] = 1.0;
        let mdp = MdpSpec {
            n_states: n,
            n_actions: na,
            transition,
            reward: self.reward(),
            gamma: self.gamma,
            initial,
            terminal: vec![false; n],
        };
        mdp.validate()?;
        Ok(mdp)
    }
}
