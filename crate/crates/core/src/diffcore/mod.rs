//! Differentiable function approximators over flat parameter vectors.
//!
//! Gradients are hand-derived reverse-mode passes over affine layers with
//! ELU activations or over table lookups. Objectives built on top of them
//! implement [`Objective`].

mod adam;
mod checkpoint;
mod model;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_FORMAT};
pub use model::{elu, elu_grad, Input, ModelSpec, Tape, HIDDEN};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiffError {
    #[error("{what} has length {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("index {index} out of range for input dimension {len}")]
    Index { index: usize, len: usize },
    #[error("unsupported input: {0}")]
    Unsupported(&'static str),
    #[error("non-finite value in {term}")]
    NonFinite { term: &'static str },
    #[error("invalid layout: {0}")]
    Layout(String),
}

/// A named, contiguous range of a [`ParamVector`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl Segment {
    pub fn new(name: impl Into<String>, offset: usize, len: usize) -> Self {
        Self {
            name: name.into(),
            offset,
            len,
        }
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Ordered segments that tile `0..total` without gaps or overlap.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Layout {
    pub segments: Vec<Segment>,
}

impl Layout {
    /// Concatenates model layouts, prefixing each model's segments with its name.
    pub fn of_models(models: &[(&str, &ModelSpec)]) -> Self {
        let mut segments = Vec::new();
        let mut base = 0;
        for (name, spec) in models {
            for mut s in spec.segments(name) {
                s.offset += base;
                segments.push(s);
            }
            base += spec.n_params();
        }
        Self { segments }
    }

    pub fn total(&self) -> usize {
        self.segments.last().map_or(0, |s| s.offset + s.len)
    }

    pub fn get(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    /// Range covering every segment whose name starts with `prefix.`.
    pub fn span(&self, prefix: &str) -> Option<std::ops::Range<usize>> {
        let dotted = format!("{prefix}.");
        let mut hits = self.segments.iter().filter(|s| s.name.starts_with(&dotted));
        let first = hits.next()?;
        let last = hits.next_back().unwrap_or(first);
        Some(first.offset..last.offset + last.len)
    }

    pub fn validate(&self, n_values: usize) -> Result<(), DiffError> {
        let mut next = 0;
        for s in &self.segments {
            if s.offset != next {
                return Err(DiffError::Layout(format!(
                    "segment {} starts at {} but the previous one ends at {next}",
                    s.name, s.offset
                )));
            }
            next = s.offset.checked_add(s.len).ok_or_else(|| DiffError::Layout("segment overflows".into()))?;
        }
        if next != n_values {
            return Err(DiffError::Layout(format!("segments cover {next} values, array has {n_values}")));
        }
        Ok(())
    }
}

/// Flat trainable parameters with their named layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Layout,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Layout) -> Result<Self, DiffError> {
        layout.validate(values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DiffError::NonFinite { term: "parameters" });
        }
        Ok(Self { values, layout })
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout.get(name).map(|s| &self.values[s.range()])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A differentiable scalar function of a flat parameter slice.
pub trait Objective {
    fn value(&self, params: &[f64]) -> Result<f64, DiffError>;

    fn value_and_gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>), DiffError>;
}

/// Exact gradient of `objective` at `params`.
pub fn gradient<O: Objective + ?Sized>(objective: &O, params: &[f64]) -> Result<Vec<f64>, DiffError> {
    let (_, grad) = objective.value_and_gradient(params)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(DiffError::NonFinite { term: "gradient" });
    }
    Ok(grad)
}
