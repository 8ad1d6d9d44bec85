use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::metrics::mid_ranks;
use super::EvalError;
use crate::avril::{AvrilModel, RewardInput};
use crate::envs::{occupancy_counts, GridworldSpec, State, StateSpace, Trajectory};

/// Maps `values` affinely onto `[0, 1]`; a constant input maps to all zeros.
pub fn min_max_scale(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    values
        .iter()
        .map(|v| if span > 0.0 { (v - min) / span } else { 0.0 })
        .collect()
}

/// A row-major `width x height` array of cell values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn scaled(width: usize, height: usize, raw: &[f64]) -> Self {
        Self {
            width,
            height,
            values: min_max_scale(raw),
        }
    }

    /// A `width,height` header with its values precedes one line per row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "width,height")?;
        writeln!(out, "{},{}", self.width, self.height)?;
        for row in self.values.chunks(self.width) {
            let line: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// The four scaled gridworld maps.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatmapSet {
    pub true_reward: Grid,
    pub occupancy: Grid,
    pub posterior_mean: Grid,
    pub posterior_std: Grid,
}

impl HeatmapSet {
    pub fn grids(&self) -> [(&'static str, &Grid); 4] {
        [
            ("true_reward", &self.true_reward),
            ("occupancy", &self.occupancy),
            ("posterior_mean", &self.posterior_mean),
            ("posterior_std", &self.posterior_std),
        ]
    }

    /// Writes `<name>.csv` for every grid into `dir` and returns the paths.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        self.grids()
            .iter()
            .map(|(name, grid)| {
                let path = dir.join(format!("{name}.csv"));
                grid.write_csv(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
                Ok(path)
            })
            .collect()
    }
}

/// Queries the encoder at every cell of `grid` and scales the results next
/// to the true reward and the demonstrations' occupancy.
///
/// A state-action reward is summarised per cell by its mean over actions.
pub fn posterior_maps(
    model: &AvrilModel,
    params: &[f64],
    grid: &GridworldSpec,
    demos: &[Trajectory],
) -> Result<HeatmapSet, EvalError> {
    let n = grid.n_states();
    if model.space != (StateSpace::Discrete { n_states: n }) {
        return Err(EvalError::Input(format!(
            "heatmaps need a tabular model over {n} cells, the model has {:?}",
            model.space
        )));
    }
    let actions: Vec<Option<usize>> = match model.config.reward_input {
        RewardInput::StateOnly => vec![None],
        RewardInput::StateAction => (0..model.n_actions).map(Some).collect(),
    };
    let (mut means, mut stds) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for s in 0..n {
        let (mut mean, mut std) = (0.0, 0.0);
        for &a in &actions {
            let post = model.encode(params, &State::Discrete(s), a)?;
            mean += post.mean;
            std += post.std();
        }
        means.push(mean / actions.len() as f64);
        stds.push(std / actions.len() as f64);
    }
    let occupancy: Vec<f64> = occupancy_counts(demos, n).counts.iter().map(|&c| c as f64).collect();
    let (w, h) = (grid.width, grid.height);
    Ok(HeatmapSet {
        true_reward: Grid::scaled(w, h, &grid.reward()),
        occupancy: Grid::scaled(w, h, &occupancy),
        posterior_mean: Grid::scaled(w, h, &means),
        posterior_std: Grid::scaled(w, h, &stds),
    })
}

/// Spearman rank correlation with mid-ranked ties; `None` if either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "paired samples");
    let (rx, ry) = (mid_ranks(x), mid_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Rank correlation of posterior std against occupancy across cells.
pub fn uncertainty_occupancy_correlation(maps: &HeatmapSet) -> Result<f64, EvalError> {
    spearman(&maps.posterior_std.values, &maps.occupancy.values)
        .ok_or_else(|| EvalError::Undefined("rank correlation with a constant grid".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SliceRow {
    pub value: f64,
    pub mean: f64,
    pub std: f64,
}

/// Posterior along `n` evenly spaced values of one state dimension, every
/// other dimension held at `base`.
pub fn reward_slice(
    model: &AvrilModel,
    params: &[f64],
    base: &[f64],
    dim: usize,
    range: (f64, f64),
    n: usize,
    action: Option<usize>,
) -> Result<Vec<SliceRow>, EvalError> {
    if model.space.is_discrete() {
        return Err(EvalError::Input("reward slices need a continuous state space".into()));
    }
    if dim >= base.len() {
        return Err(EvalError::Input(format!("dimension {dim} out of range for a {}-d state", base.len())));
    }
    if n == 0 || !(range.0.is_finite() && range.1.is_finite()) {
        return Err(EvalError::Input("a slice needs a finite range and at least one sample".into()));
    }
    (0..n)
        .map(|i| {
            let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            let value = range.0 + t * (range.1 - range.0);
            let mut x = base.to_vec();
            x[dim] = value;
            let post = model.encode(params, &State::Continuous(x), action)?;
            Ok(SliceRow {
                value,
                mean: post.mean,
                std: post.std(),
            })
        })
        .collect()
}

pub fn write_slice_csv<W: Write>(rows: &[SliceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "value,mean,std")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.value, r.mean, r.std)?;
    }
    Ok(())
}
