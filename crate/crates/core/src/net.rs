//! Dense ReLU networks over flat parameter vectors.
//!
//! A network is described by [`MlpSpec`]; its parameters live in a single
//! [`ParamVector`] laid out layer by layer as `W_l` (row-major, `out x in`)
//! followed by `b_l`. Hidden layers use ReLU, the single output unit is a
//! logit squashed by a sigmoid, and the loss is mean binary cross-entropy.
//!
//! Besides the usual forward/backward pair this module provides
//! [`grad_inputs_of_inner_product`], the input-gradient of
//! `<grad_params(X), v>`. It is computed by differentiating the backward pass
//! once more (reverse over reverse), which is what the condensation
//! meta-gradient needs.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use rand::RngCore;

use crate::error::{check_dim, Error, Result};
use crate::matrix::Matrix;
use crate::rng;

/// Probability clamp used by the cross-entropy.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    #[default]
    Relu,
}

/// Architecture of a dense binary classifier.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    /// Dropout after every hidden layer; only applied in training mode.
    pub dropout_rate: f64,
    pub seed: u64,
}

/// Offsets of one affine layer inside a [`ParamVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerShape {
    pub fn weights<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.weight_offset..self.weight_offset + self.fan_in * self.fan_out]
    }

    pub fn biases<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.bias_offset..self.bias_offset + self.fan_out]
    }
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, dropout_rate: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            layer_widths,
            activation: Activation::Relu,
            dropout_rate,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `d -> hidden -> 1` with the given hidden width.
    pub fn single_hidden(input_dim: usize, hidden: usize, dropout_rate: f64, seed: u64) -> Result<Self> {
        Self::new(vec![input_dim, hidden, 1], dropout_rate, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::InvalidArgument("an MLP needs at least two layer widths".into()));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        if *self.layer_widths.last().unwrap() != 1 {
            return Err(Error::InvalidArgument("the output width must be 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument("dropout rate must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let mut offset = 0;
        self.layer_widths
            .windows(2)
            .map(|w| {
                let shape = LayerShape {
                    fan_in: w[0],
                    fan_out: w[1],
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                };
                offset += w[0] * w[1] + w[1];
                shape
            })
            .collect()
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        check_dim("parameter vector", self.param_count(), params.len())
    }

    fn check_inputs(&self, inputs: &Matrix) -> Result<()> {
        check_dim("input width", self.input_dim(), inputs.cols())
    }
}

/// Flattened model parameters.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// A labelled mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub labels: Vec<f64>,
}

impl Batch {
    pub fn new(inputs: Matrix, labels: Vec<f64>) -> Result<Self> {
        check_dim("batch labels", inputs.rows(), labels.len())?;
        if inputs.rows() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if !inputs.is_finite() {
            return Err(Error::InvalidArgument("non-finite batch input".into()));
        }
        if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Kaiming-uniform weights (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`) and zero biases.
pub fn init_params(spec: &MlpSpec, seed: u64) -> ParamVector {
    let mut rng = rng::seeded(seed);
    let mut params = vec![0.0; spec.param_count()];
    for layer in spec.layers() {
        let bound = libm::sqrt(6.0 / layer.fan_in as f64);
        for w in &mut params[layer.weight_offset..layer.bias_offset] {
            *w = rng::uniform(&mut rng, -bound, bound);
        }
    }
    ParamVector(params)
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Activations recorded by a forward pass.
struct ForwardCache {
    /// `a_0 .. a_{L-1}`: the input followed by every hidden activation.
    acts: Vec<Vec<f64>>,
    /// Per hidden layer: ReLU derivative times the dropout scale.
    gates: Vec<Vec<f64>>,
    /// Output logits.
    logits: Vec<f64>,
}

fn affine(layer: &LayerShape, params: &[f64], input: &[f64], rows: usize) -> Vec<f64> {
    let w = layer.weights(params);
    let b = layer.biases(params);
    let mut out = vec![0.0; rows * layer.fan_out];
    for i in 0..rows {
        let x = &input[i * layer.fan_in..(i + 1) * layer.fan_in];
        let o = &mut out[i * layer.fan_out..(i + 1) * layer.fan_out];
        for (j, oj) in o.iter_mut().enumerate() {
            let wj = &w[j * layer.fan_in..(j + 1) * layer.fan_in];
            *oj = b[j] + wj.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
        }
    }
    out
}

/// `out[i, k] = sum_j delta[i, j] * W[j, k]` for `W` shaped `fan_out x fan_in`.
fn back_through(w: &[f64], layer: &LayerShape, delta: &[f64], rows: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * layer.fan_in];
    for i in 0..rows {
        let o = &mut out[i * layer.fan_in..(i + 1) * layer.fan_in];
        for j in 0..layer.fan_out {
            let d = delta[i * layer.fan_out + j];
            if d == 0.0 {
                continue;
            }
            let wj = &w[j * layer.fan_in..(j + 1) * layer.fan_in];
            for (ok, wk) in o.iter_mut().zip(wj) {
                *ok += d * wk;
            }
        }
    }
    out
}

fn forward_cache(
    spec: &MlpSpec,
    params: &[f64],
    inputs: &Matrix,
    mut dropout: Option<&mut dyn RngCore>,
) -> ForwardCache {
    let rows = inputs.rows();
    let layers = spec.layers();
    let mut acts = Vec::with_capacity(layers.len());
    let mut gates = Vec::with_capacity(layers.len() - 1);
    acts.push(inputs.as_slice().to_vec());
    let keep = 1.0 - spec.dropout_rate;
    for (l, layer) in layers.iter().enumerate() {
        let mut z = affine(layer, params, &acts[l], rows);
        if l + 1 == layers.len() {
            return ForwardCache {
                acts,
                gates,
                logits: z,
            };
        }
        let mut gate = vec![0.0; z.len()];
        for (zk, gk) in z.iter_mut().zip(gate.iter_mut()) {
            let mut g = if *zk > 0.0 { 1.0 } else { 0.0 };
            if let Some(rng) = dropout.as_deref_mut() {
                if spec.dropout_rate > 0.0 {
                    let u = rng::uniform(rng, 0.0, 1.0);
                    g = if u < keep { g / keep } else { 0.0 };
                }
            }
            *gk = g;
            *zk *= g;
        }
        acts.push(z);
        gates.push(gate);
    }
    unreachable!("spec has at least one layer")
}

/// Pre-sigmoid outputs, inference mode.
pub fn logits(spec: &MlpSpec, params: &[f64], inputs: &Matrix) -> Result<Vec<f64>> {
    spec.check_params(params)?;
    spec.check_inputs(inputs)?;
    Ok(forward_cache(spec, params, inputs, None).logits)
}

/// Output probabilities, inference mode (no dropout).
pub fn forward(spec: &MlpSpec, params: &[f64], inputs: &Matrix) -> Result<Vec<f64>> {
    Ok(logits(spec, params, inputs)?
        .into_iter()
        .map(sigmoid)
        .collect())
}

/// Mean binary cross-entropy with probabilities clamped to `[1e-12, 1 - 1e-12]`.
pub fn bce_loss(probs: &[f64], labels: &[f64]) -> Result<f64> {
    check_dim("loss labels", probs.len(), labels.len())?;
    Ok(bce_unchecked(probs, labels))
}

pub(crate) fn bce_unchecked(probs: &[f64], labels: &[f64]) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p))
        })
        .sum();
    total / probs.len() as f64
}

/// Mean loss and its parameter gradient. With `dropout` set the pass runs in
/// training mode and the gradient is that of the sampled sub-network.
pub(crate) fn loss_and_grad_unchecked(
    spec: &MlpSpec,
    params: &[f64],
    inputs: &Matrix,
    labels: &[f64],
    dropout: Option<&mut dyn RngCore>,
) -> (f64, Vec<f64>) {
    let rows = inputs.rows();
    let cache = forward_cache(spec, params, inputs, dropout);
    let probs: Vec<f64> = cache.logits.iter().copied().map(sigmoid).collect();
    let loss = bce_unchecked(&probs, labels);
    let scale = 1.0 / rows as f64;
    let mut delta: Vec<f64> = probs
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - y) * scale)
        .collect();
    let mut grad = vec![0.0; params.len()];
    let layers = spec.layers();
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let a = &cache.acts[l];
        {
            let (gw, gb) = grad[layer.weight_offset..layer.bias_offset + layer.fan_out]
                .split_at_mut(layer.fan_in * layer.fan_out);
            for i in 0..rows {
                let ai = &a[i * layer.fan_in..(i + 1) * layer.fan_in];
                for j in 0..layer.fan_out {
                    let d = delta[i * layer.fan_out + j];
                    if d == 0.0 {
                        continue;
                    }
                    gb[j] += d;
                    let row = &mut gw[j * layer.fan_in..(j + 1) * layer.fan_in];
                    for (g, x) in row.iter_mut().zip(ai) {
                        *g += d * x;
                    }
                }
            }
        }
        if l > 0 {
            let mut e = back_through(layer.weights(params), layer, &delta, rows);
            for (ek, gk) in e.iter_mut().zip(&cache.gates[l - 1]) {
                *ek *= gk;
            }
            delta = e;
        }
    }
    (loss, grad)
}

/// Full-batch mean loss in inference mode.
pub(crate) fn loss_unchecked(spec: &MlpSpec, params: &[f64], inputs: &Matrix, labels: &[f64]) -> f64 {
    let cache = forward_cache(spec, params, inputs, None);
    let probs: Vec<f64> = cache.logits.into_iter().map(sigmoid).collect();
    bce_unchecked(&probs, labels)
}

/// Mean loss of `batch` at `params`, inference mode.
pub fn batch_loss(spec: &MlpSpec, params: &[f64], batch: &Batch) -> Result<f64> {
    spec.check_params(params)?;
    spec.check_inputs(&batch.inputs)?;
    Ok(loss_unchecked(spec, params, &batch.inputs, &batch.labels))
}

/// Exact gradient of the mean batch cross-entropy with respect to the parameters.
pub fn grad_params(spec: &MlpSpec, params: &[f64], batch: &Batch) -> Result<ParamVector> {
    spec.check_params(params)?;
    spec.check_inputs(&batch.inputs)?;
    Ok(ParamVector(
        loss_and_grad_unchecked(spec, params, &batch.inputs, &batch.labels, None).1,
    ))
}

/// Gradient with respect to the batch inputs of `s(X) = <grad_params(X), v>`,
/// with `v` held constant. The loss inside `s` is the batch mean, so callers
/// that want the per-sample sum multiply by the batch size.
pub fn grad_inputs_of_inner_product(
    spec: &MlpSpec,
    params: &[f64],
    batch: &Batch,
    v: &[f64],
) -> Result<Matrix> {
    spec.check_params(params)?;
    spec.check_inputs(&batch.inputs)?;
    check_dim("direction vector", params.len(), v.len())?;
    Ok(grad_inputs_unchecked(spec, params, &batch.inputs, &batch.labels, v))
}

pub(crate) fn grad_inputs_unchecked(
    spec: &MlpSpec,
    params: &[f64],
    inputs: &Matrix,
    labels: &[f64],
    v: &[f64],
) -> Matrix {
    let rows = inputs.rows();
    let layers = spec.layers();
    let depth = layers.len();
    let cache = forward_cache(spec, params, inputs, None);
    let probs: Vec<f64> = cache.logits.iter().copied().map(sigmoid).collect();
    let scale = 1.0 / rows as f64;

    // Backward pass, keeping every delta_l (gradient wrt z_l).
    let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); depth];
    deltas[depth - 1] = probs
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - y) * scale)
        .collect();
    for l in (1..depth).rev() {
        let mut e = back_through(layers[l].weights(params), &layers[l], &deltas[l], rows);
        for (ek, gk) in e.iter_mut().zip(&cache.gates[l - 1]) {
            *ek *= gk;
        }
        deltas[l - 1] = e;
    }

    // s = sum_l <delta_l, a_{l-1} V_l^T + v_l>. Adjoint of the backward pass:
    // bar(delta_1) = u_1, bar(delta_l) = u_l + (bar(delta_{l-1}) * gate_{l-1}) W_l^T.
    let mut delta_bar = affine(&layers[0], v, &cache.acts[0], rows);
    for l in 1..depth {
        let layer = &layers[l];
        let mut u = affine(layer, v, &cache.acts[l], rows);
        let w = layer.weights(params);
        let gate = &cache.gates[l - 1];
        for i in 0..rows {
            for j in 0..layer.fan_out {
                let wj = &w[j * layer.fan_in..(j + 1) * layer.fan_in];
                let mut acc = 0.0;
                for k in 0..layer.fan_in {
                    let idx = i * layer.fan_in + k;
                    acc += delta_bar[idx] * gate[idx] * wj[k];
                }
                u[i * layer.fan_out + j] += acc;
            }
        }
        delta_bar = u;
    }

    // delta_L depends on z_L through the sigmoid.
    let mut z_bar: Vec<f64> = delta_bar
        .iter()
        .zip(&probs)
        .map(|(d, p)| d * p * (1.0 - p) * scale)
        .collect();

    // Reverse through the forward pass, adding the direct a_{l-1} terms.
    for l in (0..depth).rev() {
        let layer = &layers[l];
        let mut a_bar = back_through(layer.weights(params), layer, &z_bar, rows);
        let direct = back_through(layer.weights(v), layer, &deltas[l], rows);
        for (a, d) in a_bar.iter_mut().zip(&direct) {
            *a += d;
        }
        if l == 0 {
            return Matrix::from_vec(rows, layer.fan_in, a_bar).expect("shape by construction");
        }
        for (a, g) in a_bar.iter_mut().zip(&cache.gates[l - 1]) {
            *a *= g;
        }
        z_bar = a_bar;
    }
    unreachable!("spec has at least one layer")
}

/// One momentum-SGD step: `velocity <- momentum * velocity + grad`,
/// `params <- params - lr * velocity`.
pub fn sgd_step(
    params: &ParamVector,
    grad: &[f64],
    lr: f64,
    velocity: &ParamVector,
    momentum: f64,
) -> Result<(ParamVector, ParamVector)> {
    check_dim("gradient", params.len(), grad.len())?;
    check_dim("velocity", params.len(), velocity.len())?;
    let mut p = params.clone();
    let mut v = velocity.clone();
    sgd_step_in_place(&mut p, grad, lr, &mut v, momentum);
    Ok((p, v))
}

pub(crate) fn sgd_step_in_place(
    params: &mut [f64],
    grad: &[f64],
    lr: f64,
    velocity: &mut [f64],
    momentum: f64,
) {
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}
