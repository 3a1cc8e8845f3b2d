//! Scalar objectives over parameter space.
//!
//! Path integrals, control-point fitting and smoothness estimates only need a
//! loss and its gradient, so they are written against [`Objective`]. The
//! network training loss is [`DatasetObjective`]; [`Quadratic`] is the
//! closed-form toy used to check those routines.

use alloc::vec::Vec;

use rand::RngCore;

use crate::error::{check_dim, Result};
use crate::matrix::Matrix;
use crate::net::{self, MlpSpec};
use crate::rng;

pub trait Objective {
    fn dim(&self) -> usize;

    fn loss(&self, params: &[f64]) -> f64;

    fn loss_and_grad(&self, params: &[f64]) -> (f64, Vec<f64>);

    /// Stochastic estimate used by iterative fitting; full-batch by default.
    fn sampled_loss_and_grad(&self, params: &[f64], _rng: &mut dyn RngCore) -> (f64, Vec<f64>) {
        self.loss_and_grad(params)
    }
}

/// Mean cross-entropy of a network over a fixed labelled set, evaluated in
/// inference mode. `batch_size` controls [`Objective::sampled_loss_and_grad`].
#[derive(Debug, Clone, Copy)]
pub struct DatasetObjective<'a> {
    spec: &'a MlpSpec,
    inputs: &'a Matrix,
    labels: &'a [f64],
    batch_size: Option<usize>,
}

impl<'a> DatasetObjective<'a> {
    pub fn new(spec: &'a MlpSpec, inputs: &'a Matrix, labels: &'a [f64]) -> Result<Self> {
        check_dim("input width", spec.input_dim(), inputs.cols())?;
        check_dim("labels", inputs.rows(), labels.len())?;
        if inputs.rows() == 0 {
            return Err(crate::Error::InvalidArgument("empty dataset".into()));
        }
        Ok(Self {
            spec,
            inputs,
            labels,
            batch_size: None,
        })
    }

    /// Samples mini-batches of this size (without replacement) for stochastic steps.
    pub fn with_minibatch(mut self, batch_size: usize) -> Self {
        self.batch_size = Some(batch_size.max(1));
        self
    }

    pub fn spec(&self) -> &MlpSpec {
        self.spec
    }

    pub fn inputs(&self) -> &Matrix {
        self.inputs
    }

    pub fn labels(&self) -> &[f64] {
        self.labels
    }
}

impl Objective for DatasetObjective<'_> {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn loss(&self, params: &[f64]) -> f64 {
        net::loss_unchecked(self.spec, params, self.inputs, self.labels)
    }

    fn loss_and_grad(&self, params: &[f64]) -> (f64, Vec<f64>) {
        net::loss_and_grad_unchecked(self.spec, params, self.inputs, self.labels, None)
    }

    fn sampled_loss_and_grad(&self, params: &[f64], rng: &mut dyn RngCore) -> (f64, Vec<f64>) {
        match self.batch_size {
            Some(b) if b < self.inputs.rows() => {
                let idx = rng::sample_without_replacement(rng, self.inputs.rows(), b);
                let x = self.inputs.select_rows(&idx);
                let y: Vec<f64> = idx.iter().map(|&i| self.labels[i]).collect();
                net::loss_and_grad_unchecked(self.spec, params, &x, &y, None)
            }
            _ => self.loss_and_grad(params),
        }
    }
}

/// `L(theta) = curvature/2 * ||theta - center||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub curvature: f64,
    pub center: Vec<f64>,
}

impl Quadratic {
    pub fn new(curvature: f64, center: Vec<f64>) -> Self {
        Self { curvature, center }
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn loss(&self, params: &[f64]) -> f64 {
        0.5 * self.curvature
            * params
                .iter()
                .zip(&self.center)
                .map(|(p, c)| (p - c) * (p - c))
                .sum::<f64>()
    }

    fn loss_and_grad(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let grad = params
            .iter()
            .zip(&self.center)
            .map(|(p, c)| self.curvature * (p - c))
            .collect();
        (self.loss(params), grad)
    }
}
