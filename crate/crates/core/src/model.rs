//! The training objective: a fully connected ReLU network with squared or
//! logistic loss plus L2 weight decay, and its exact reverse-mode gradient.
//!
//! The objective is the mean of per-sample losses over a batch:
//!
//! - squared:  `(1/n_b) * sum_i 0.5 * ||net(x_i) - onehot(y_i)||^2`
//! - logistic: `(1/n_b) * sum_i crossentropy(softmax(net(x_i)), y_i)`
//!
//! plus `(mu/2) * ||w||^2` in both cases, with the decay applied to every
//! weight and bias. Hidden layers use ReLU; the final layer is linear.
//!
//! Parameters live in one flat [`ParamVector`]: for each layer in order, the
//! row-major `(fan_out x fan_in)` weight block followed by its `fan_out`
//! biases. All arithmetic is f64 and every reduction accumulates left to
//! right, so identical inputs produce bit-identical outputs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::params::ParamVector;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
}

/// Which per-sample loss the objective uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Squared,
    Logistic,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LossKind::Squared => write!(f, "squared"),
            LossKind::Logistic => write!(f, "logistic"),
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "squared" => Ok(LossKind::Squared),
            "logistic" => Ok(LossKind::Logistic),
            other => Err(format!("unknown loss kind `{other}` (squared|logistic)")),
        }
    }
}

/// Architecture, loss, and regularization description defining the objective.
///
/// `layer_widths` holds the hidden output sizes only; the final classification
/// layer of width `num_classes` (linear, no activation) is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub layer_widths: Vec<usize>,
    pub input_dim: usize,
    pub num_classes: usize,
    pub loss_kind: LossKind,
    pub weight_decay: f64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_dim == 0 {
            return Err(ModelError::InvalidSpec("input_dim must be positive".into()));
        }
        if self.num_classes == 0 {
            return Err(ModelError::InvalidSpec(
                "num_classes must be positive".into(),
            ));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(ModelError::InvalidSpec(
                "layer widths must be positive".into(),
            ));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(ModelError::InvalidSpec(
                "weight_decay must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` per layer, including the final classification layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.layer_widths.len() + 1);
        let mut fan_in = self.input_dim;
        for &width in &self.layer_widths {
            dims.push((fan_in, width));
            fan_in = width;
        }
        dims.push((fan_in, self.num_classes));
        dims
    }

    /// Total parameter count `p = sum over layers of (fan_in + 1) * fan_out`.
    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|(fi, fo)| (fi + 1) * fo)
            .sum()
    }

    fn check_params(&self, params: &ParamVector) -> Result<(), ModelError> {
        let p = self.param_count();
        if params.len() != p {
            return Err(ModelError::Shape(format!(
                "parameter vector has {} entries, spec requires {p}",
                params.len()
            )));
        }
        Ok(())
    }
}

/// A batch of training samples: row-major `n_b x input_dim` inputs plus one
/// integer label per row. Row order is part of the input; accumulation over
/// samples is fixed left to right.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    inputs: Vec<f64>,
    labels: Vec<usize>,
    input_dim: usize,
}

impl Batch {
    pub fn new(inputs: Vec<f64>, labels: Vec<usize>, input_dim: usize) -> Result<Self, ModelError> {
        if labels.is_empty() {
            return Err(ModelError::Shape("batch must contain at least one sample".into()));
        }
        if input_dim == 0 || inputs.len() != labels.len() * input_dim {
            return Err(ModelError::Shape(format!(
                "inputs ({}) != labels ({}) x input_dim ({input_dim})",
                inputs.len(),
                labels.len()
            )));
        }
        Ok(Self {
            inputs,
            labels,
            input_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false // n_b >= 1 by construction
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// All inputs as one row-major `n_b x input_dim` slice.
    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    fn check_against(&self, spec: &ModelSpec) -> Result<(), ModelError> {
        if self.input_dim != spec.input_dim {
            return Err(ModelError::Shape(format!(
                "batch input_dim {} != spec input_dim {}",
                self.input_dim, spec.input_dim
            )));
        }
        for &label in &self.labels {
            if label >= spec.num_classes {
                return Err(ModelError::LabelOutOfRange {
                    label,
                    num_classes: spec.num_classes,
                });
            }
        }
        Ok(())
    }
}

/// Deterministic initialization: each layer's weights uniform in
/// `[-sqrt(6/fan_in), +sqrt(6/fan_in)]`, biases zero.
pub fn init_params(spec: &ModelSpec, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(spec.param_count());
    for (fan_in, fan_out) in spec.layer_dims() {
        let limit = (6.0 / fan_in as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            values.push(rng.random_range(-limit..limit));
        }
        values.extend(std::iter::repeat(0.0).take(fan_out));
    }
    ParamVector::new(values)
}

/// Per-sample forward pass; returns the final-layer logits.
pub fn logits(
    params: &ParamVector,
    input: &[f64],
    spec: &ModelSpec,
) -> Result<Vec<f64>, ModelError> {
    spec.validate()?;
    spec.check_params(params)?;
    if input.len() != spec.input_dim {
        return Err(ModelError::Shape(format!(
            "input has {} entries, spec input_dim is {}",
            input.len(),
            spec.input_dim
        )));
    }
    // The label is never read by the forward pass.
    let batch = Batch::new(input.to_vec(), vec![0], spec.input_dim)?;
    let acts = forward_batch(params.values(), &batch, spec);
    Ok(acts.last().unwrap().clone())
}

/// Batch objective value, including the weight-decay term.
pub fn loss(params: &ParamVector, batch: &Batch, spec: &ModelSpec) -> Result<f64, ModelError> {
    spec.validate()?;
    spec.check_params(params)?;
    batch.check_against(spec)?;

    let acts = forward_batch(params.values(), batch, spec);
    let outputs = acts.last().unwrap();
    let classes = spec.num_classes;
    let mut total = 0.0;
    for i in 0..batch.len() {
        total += sample_loss(
            &outputs[i * classes..(i + 1) * classes],
            batch.label(i),
            spec.loss_kind,
        );
    }
    let mut value = total / batch.len() as f64;
    if spec.weight_decay > 0.0 {
        value += 0.5 * spec.weight_decay * params.norm_sq();
    }
    if !value.is_finite() {
        return Err(ModelError::NonFinite {
            context: format!("loss over batch of {}", batch.len()),
        });
    }
    Ok(value)
}

/// Exact reverse-mode gradient of [`loss`], including the `mu * w` decay term.
/// The ReLU subgradient at exactly zero is taken as zero.
pub fn grad(
    params: &ParamVector,
    batch: &Batch,
    spec: &ModelSpec,
) -> Result<ParamVector, ModelError> {
    spec.validate()?;
    spec.check_params(params)?;
    batch.check_against(spec)?;

    let w = params.values();
    let dims = spec.layer_dims();
    let n_layers = dims.len();
    let n_b = batch.len();
    let classes = spec.num_classes;
    let acts = forward_batch(w, batch, spec);
    let mut acc = vec![0.0; params.len()];

    // Parameter offset of the start of each layer.
    let mut offsets = Vec::with_capacity(n_layers);
    let mut off = 0;
    for &(fi, fo) in &dims {
        offsets.push(off);
        off += (fi + 1) * fo;
    }

    // d(loss)/d(logits), all samples.
    let outputs = acts.last().unwrap();
    let mut d_curr = vec![0.0; n_b * classes];
    for s in 0..n_b {
        output_grad(
            &outputs[s * classes..(s + 1) * classes],
            batch.label(s),
            spec.loss_kind,
            &mut d_curr[s * classes..(s + 1) * classes],
        );
    }

    let mut d_prev: Vec<f64> = Vec::new();
    for l in (0..n_layers).rev() {
        let (fan_in, fan_out) = dims[l];
        let offset = offsets[l];
        let weights = &w[offset..offset + fan_in * fan_out];
        let x: &[f64] = if l == 0 { batch.inputs() } else { &acts[l - 1] };

        // Parameter gradients: per sample in batch order, each weight row
        // vectorized over its fan-in.
        let (d_weights, d_biases) = {
            let block = &mut acc[offset..offset + (fan_in + 1) * fan_out];
            block.split_at_mut(fan_in * fan_out)
        };
        for s in 0..n_b {
            let dz_row = &d_curr[s * fan_out..(s + 1) * fan_out];
            let x_row = &x[s * fan_in..(s + 1) * fan_in];
            for o in 0..fan_out {
                let dz = dz_row[o];
                d_biases[o] += dz;
                let row = &mut d_weights[o * fan_in..(o + 1) * fan_in];
                for (dw, xi) in row.iter_mut().zip(x_row) {
                    *dw += dz * xi;
                }
            }
        }

        if l > 0 {
            // d_prev = W^T d_curr, gated by ReLU'(z) = [activation > 0].
            let a_prev = &acts[l - 1];
            d_prev.clear();
            d_prev.resize(n_b * fan_in, 0.0);
            for s in 0..n_b {
                let dz_row = &d_curr[s * fan_out..(s + 1) * fan_out];
                let dp_row = &mut d_prev[s * fan_in..(s + 1) * fan_in];
                for o in 0..fan_out {
                    let dz = dz_row[o];
                    let w_row = &weights[o * fan_in..(o + 1) * fan_in];
                    for (dp, wi) in dp_row.iter_mut().zip(w_row) {
                        *dp += dz * wi;
                    }
                }
                let a_row = &a_prev[s * fan_in..(s + 1) * fan_in];
                for (dp, &a) in dp_row.iter_mut().zip(a_row) {
                    if a <= 0.0 {
                        *dp = 0.0;
                    }
                }
            }
            std::mem::swap(&mut d_curr, &mut d_prev);
        }
    }

    let inv_n = 1.0 / n_b as f64;
    for v in acc.iter_mut() {
        *v *= inv_n;
    }
    if spec.weight_decay > 0.0 {
        for (a, p) in acc.iter_mut().zip(w) {
            *a += spec.weight_decay * p;
        }
    }
    let g = ParamVector::new(acc);
    g.ensure_finite("gradient")?;
    Ok(g)
}

/// Forward pass for a whole batch. Returns per-layer activations, each a
/// row-major `n_b x fan_out` matrix (post-ReLU for hidden layers, raw logits
/// for the final layer). Each entry accumulates its fan-in contributions in
/// ascending index order.
fn forward_batch(w: &[f64], batch: &Batch, spec: &ModelSpec) -> Vec<Vec<f64>> {
    let dims = spec.layer_dims();
    let n_layers = dims.len();
    let n_b = batch.len();
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
    let mut wt: Vec<f64> = Vec::new();
    let mut offset = 0;
    for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let weights = &w[offset..offset + fan_in * fan_out];
        let biases = &w[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
        offset += (fan_in + 1) * fan_out;
        let last = l == n_layers - 1;

        // Transposed weights make the inner accumulation contiguous.
        wt.clear();
        wt.resize(fan_in * fan_out, 0.0);
        for o in 0..fan_out {
            for i in 0..fan_in {
                wt[i * fan_out + o] = weights[o * fan_in + i];
            }
        }

        let x: &[f64] = if l == 0 { batch.inputs() } else { &acts[l - 1] };
        let mut out = vec![0.0; n_b * fan_out];
        for s in 0..n_b {
            let x_row = &x[s * fan_in..(s + 1) * fan_in];
            let z_row = &mut out[s * fan_out..(s + 1) * fan_out];
            z_row.copy_from_slice(biases);
            for (i, &xi) in x_row.iter().enumerate() {
                let wt_row = &wt[i * fan_out..(i + 1) * fan_out];
                for (z, wo) in z_row.iter_mut().zip(wt_row) {
                    *z += xi * wo;
                }
            }
            if !last {
                for z in z_row.iter_mut() {
                    *z = z.max(0.0);
                }
            }
        }
        acts.push(out);
    }
    acts
}

fn sample_loss(output: &[f64], label: usize, kind: LossKind) -> f64 {
    match kind {
        LossKind::Squared => {
            let mut s = 0.0;
            for (j, &o) in output.iter().enumerate() {
                let r = o - if j == label { 1.0 } else { 0.0 };
                s += r * r;
            }
            0.5 * s
        }
        LossKind::Logistic => log_sum_exp(output) - output[label],
    }
}

/// d(sample loss)/d(logits), written into `d_out[..output.len()]`.
fn output_grad(output: &[f64], label: usize, kind: LossKind, d_out: &mut [f64]) {
    match kind {
        LossKind::Squared => {
            for (j, &o) in output.iter().enumerate() {
                d_out[j] = o - if j == label { 1.0 } else { 0.0 };
            }
        }
        LossKind::Logistic => {
            let lse = log_sum_exp(output);
            for (j, &o) in output.iter().enumerate() {
                d_out[j] = (o - lse).exp() - if j == label { 1.0 } else { 0.0 };
            }
        }
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !m.is_finite() {
        return m;
    }
    let s = xs.iter().fold(0.0, |acc, &x| acc + (x - m).exp());
    m + s.ln()
}
