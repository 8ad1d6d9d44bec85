use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DiffError, Segment};

/// Hidden widths of every MLP in the crate.
pub const HIDDEN: [usize; 2] = [64, 64];

/// Exponential linear unit.
pub fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Derivative of [`elu`]; `1` at the origin from both sides.
pub fn elu_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Input to a function approximator.
///
/// `Index(i)` addresses a table row; dense models read it as the one-hot
/// vector `e_i` of length `input_dim`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Input<'a> {
    Index(usize),
    Dense(&'a [f64]),
}

/// Architecture of a function approximator over a flat parameter slice.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `input -> 64 -> ELU -> 64 -> ELU -> output`.
    Mlp { input_dim: usize, output_dim: usize },
    /// One row of `cols` free parameters per discrete input.
    Tabular { rows: usize, cols: usize },
    /// Affine map `W x + b`.
    Linear { input_dim: usize, output_dim: usize },
}

/// Activations recorded by a forward pass for the matching backward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    /// Pre-activations of each dense layer, the last one being the output.
    pre: Vec<Vec<f64>>,
    /// ELU outputs of the hidden layers.
    post: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl ModelSpec {
    pub fn mlp(input_dim: usize, output_dim: usize) -> Self {
        ModelSpec::Mlp { input_dim, output_dim }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            ModelSpec::Mlp { input_dim, .. } | ModelSpec::Linear { input_dim, .. } => input_dim,
            ModelSpec::Tabular { rows, .. } => rows,
        }
    }

    pub fn output_dim(&self) -> usize {
        match *self {
            ModelSpec::Mlp { output_dim, .. } | ModelSpec::Linear { output_dim, .. } => output_dim,
            ModelSpec::Tabular { cols, .. } => cols,
        }
    }

    fn dense_dims(&self) -> Option<Vec<usize>> {
        match *self {
            ModelSpec::Mlp { input_dim, output_dim } => {
                let mut dims = vec![input_dim];
                dims.extend(HIDDEN);
                dims.push(output_dim);
                Some(dims)
            }
            ModelSpec::Linear { input_dim, output_dim } => Some(vec![input_dim, output_dim]),
            ModelSpec::Tabular { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<(), DiffError> {
        if self.input_dim() == 0 || self.output_dim() == 0 {
            return Err(DiffError::Layout(format!("{self:?} has an empty dimension")));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        match self.dense_dims() {
            Some(dims) => dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum(),
            None => self.input_dim() * self.output_dim(),
        }
    }

    /// Named segments, with offsets relative to the start of this model's slice.
    pub fn segments(&self, prefix: &str) -> Vec<Segment> {
        match self.dense_dims() {
            Some(dims) => {
                let mut out = Vec::new();
                let mut offset = 0;
                for (l, w) in dims.windows(2).enumerate() {
                    out.push(Segment::new(format!("{prefix}.layer{l}.weight"), offset, w[0] * w[1]));
                    offset += w[0] * w[1];
                    out.push(Segment::new(format!("{prefix}.layer{l}.bias"), offset, w[1]));
                    offset += w[1];
                }
                out
            }
            None => vec![Segment::new(format!("{prefix}.table"), 0, self.n_params())],
        }
    }

    /// Glorot-uniform weights and zero biases; tables start at zero.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.n_params());
        match self.dense_dims() {
            Some(dims) => {
                for w in dims.windows(2) {
                    let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
                    params.extend((0..w[0] * w[1]).map(|_| rng.gen_range(-bound..=bound)));
                    params.extend(std::iter::repeat_n(0.0, w[1]));
                }
            }
            None => params.resize(self.n_params(), 0.0),
        }
        params
    }

    fn check(&self, params: &[f64], input: Input<'_>) -> Result<(), DiffError> {
        if params.len() != self.n_params() {
            return Err(DiffError::Dimension {
                what: "parameters",
                expected: self.n_params(),
                got: params.len(),
            });
        }
        match (self, input) {
            (_, Input::Index(i)) if i >= self.input_dim() => Err(DiffError::Index {
                index: i,
                len: self.input_dim(),
            }),
            (ModelSpec::Tabular { .. }, Input::Dense(_)) => Err(DiffError::Unsupported("tabular model given a dense input")),
            (_, Input::Dense(x)) if x.len() != self.input_dim() => Err(DiffError::Dimension {
                what: "input",
                expected: self.input_dim(),
                got: x.len(),
            }),
            _ => Ok(()),
        }
    }

    /// Forward pass recording what [`ModelSpec::backward`] needs.
    pub fn forward_tape(&self, params: &[f64], input: Input<'_>, tape: &mut Tape) -> Result<(), DiffError> {
        self.check(params, input)?;
        let Some(dims) = self.dense_dims() else {
            let Input::Index(row) = input else { unreachable!() };
            let cols = self.output_dim();
            tape.pre.resize(1, Vec::new());
            tape.post.clear();
            tape.pre[0].clear();
            tape.pre[0].extend_from_slice(&params[row * cols..(row + 1) * cols]);
            return Ok(());
        };
        let n_layers = dims.len() - 1;
        tape.pre.resize(n_layers, Vec::new());
        tape.post.resize(n_layers - 1, Vec::new());
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let weight = &params[offset..offset + fan_in * fan_out];
            let bias = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let mut z = std::mem::take(&mut tape.pre[l]);
            z.clear();
            z.extend_from_slice(bias);
            if l == 0 {
                affine_accumulate(weight, fan_in, input, &mut z);
            } else {
                affine_accumulate(weight, fan_in, Input::Dense(&tape.post[l - 1]), &mut z);
            }
            if l + 1 < n_layers {
                let h = &mut tape.post[l];
                h.clear();
                h.extend(z.iter().map(|v| elu(*v)));
            }
            tape.pre[l] = z;
        }
        Ok(())
    }

    pub fn forward(&self, params: &[f64], input: Input<'_>) -> Result<Vec<f64>, DiffError> {
        let mut tape = Tape::default();
        self.forward_tape(params, input, &mut tape)?;
        Ok(tape.output().to_vec())
    }

    /// Accumulates `d_out^T * d(output)/d(params)` into `grad`.
    ///
    /// `tape` must come from [`ModelSpec::forward_tape`] on the same params and input.
    pub fn backward(&self, params: &[f64], input: Input<'_>, tape: &Tape, d_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(d_out.len(), self.output_dim());
        debug_assert_eq!(grad.len(), self.n_params());
        let Some(dims) = self.dense_dims() else {
            let Input::Index(row) = input else { unreachable!() };
            let cols = self.output_dim();
            for (g, d) in grad[row * cols..(row + 1) * cols].iter_mut().zip(d_out) {
                *g += d;
            }
            return;
        };
        let n_layers = dims.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in dims.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        let mut delta = d_out.to_vec();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let w_off = offsets[l];
            let b_off = w_off + fan_in * fan_out;
            for (g, d) in grad[b_off..b_off + fan_out].iter_mut().zip(&delta) {
                *g += d;
            }
            let layer_input = if l == 0 { input } else { Input::Dense(&tape.post[l - 1]) };
            match layer_input {
                Input::Index(i) => {
                    for (o, d) in delta.iter().enumerate() {
                        grad[w_off + o * fan_in + i] += d;
                    }
                }
                Input::Dense(x) => {
                    for (o, d) in delta.iter().enumerate() {
                        let row = &mut grad[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                        for (g, xi) in row.iter_mut().zip(x) {
                            *g += d * xi;
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }
            let weight = &params[w_off..w_off + fan_in * fan_out];
            let mut prev = vec![0.0; fan_in];
            for (o, d) in delta.iter().enumerate() {
                for (p, w) in prev.iter_mut().zip(&weight[o * fan_in..(o + 1) * fan_in]) {
                    *p += w * d;
                }
            }
            for (p, z) in prev.iter_mut().zip(&tape.pre[l - 1]) {
                *p *= elu_grad(*z);
            }
            delta = prev;
        }
    }
}

fn affine_accumulate(weight: &[f64], fan_in: usize, input: Input<'_>, z: &mut [f64]) {
    match input {
        Input::Index(i) => {
            for (o, zo) in z.iter_mut().enumerate() {
                *zo += weight[o * fan_in + i];
            }
        }
        Input::Dense(x) => {
            for (o, zo) in z.iter_mut().enumerate() {
                *zo += weight[o * fan_in..(o + 1) * fan_in]
                    .iter()
                    .zip(x)
                    .map(|(w, xi)| w * xi)
                    .sum::<f64>();
            }
        }
    }
}
