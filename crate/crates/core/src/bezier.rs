//! Quadratic Bezier surrogate paths between two parameter vectors.
//!
//! `Phi(t) = (1-t)^2 theta_0 + 2t(1-t) phi + t^2 theta_T`. The control point
//! `phi` is fitted by Monte-Carlo gradient descent on the loss averaged along
//! the curve; only `(theta_0, phi, theta_T)` need to be stored.

use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::net::ParamVector;
use crate::objective::Objective;
use crate::rng;
use crate::vector;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BezierPath {
    pub theta0: ParamVector,
    pub phi: ParamVector,
    pub theta_t: ParamVector,
}

impl BezierPath {
    pub fn new(theta0: ParamVector, phi: ParamVector, theta_t: ParamVector) -> Result<Self> {
        check_dim("control point", theta0.len(), phi.len())?;
        check_dim("path end", theta0.len(), theta_t.len())?;
        let path = Self { theta0, phi, theta_t };
        if !(vector::all_finite(&path.theta0) && vector::all_finite(&path.phi) && vector::all_finite(&path.theta_t)) {
            return Err(Error::InvalidArgument("path contains non-finite values".into()));
        }
        Ok(path)
    }

    /// The straight segment, i.e. `phi` at the midpoint of the endpoints.
    pub fn linear(theta0: ParamVector, theta_t: ParamVector) -> Result<Self> {
        let phi = midpoint(&theta0, &theta_t);
        Self::new(theta0, phi, theta_t)
    }

    pub fn param_count(&self) -> usize {
        self.theta0.len()
    }

    /// `Phi(t)`; see [`eval_path`].
    pub fn at(&self, t: f64) -> Result<ParamVector> {
        eval_path(self, t)
    }

    /// `Phi''(t) = 2 (theta_0 - 2 phi + theta_T)`, constant in `t`. Summed as
    /// `(theta_0 + theta_T) - 2 phi` so the midpoint control point gives exactly zero.
    pub fn second_derivative(&self) -> Vec<f64> {
        self.theta0
            .iter()
            .zip(self.phi.iter())
            .zip(self.theta_t.iter())
            .map(|((a, p), b)| 2.0 * ((a + b) - 2.0 * p))
            .collect()
    }
}

fn midpoint(a: &[f64], b: &[f64]) -> ParamVector {
    ParamVector(a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
}

#[inline]
fn bernstein(t: f64) -> (f64, f64, f64) {
    let s = 1.0 - t;
    (s * s, 2.0 * t * s, t * t)
}

pub(crate) fn eval_unchecked(path: &BezierPath, t: f64) -> ParamVector {
    if t == 0.0 {
        return path.theta0.clone();
    }
    if t == 1.0 {
        return path.theta_t.clone();
    }
    let (b0, b1, b2) = bernstein(t);
    ParamVector(
        path.theta0
            .iter()
            .zip(path.phi.iter())
            .zip(path.theta_t.iter())
            .map(|((a, p), c)| b0 * a + b1 * p + b2 * c)
            .collect(),
    )
}

/// Evaluates the curve; `Phi(0)` and `Phi(1)` are the stored endpoints, bit for bit.
pub fn eval_path(path: &BezierPath, t: f64) -> Result<ParamVector> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(alloc::format!("t = {t} outside [0, 1]")));
    }
    Ok(eval_unchecked(path, t))
}

/// `kappa = 2 ||theta_0 - 2 phi + theta_T||`.
pub fn path_curvature(path: &BezierPath) -> f64 {
    vector::norm(&path.second_derivative())
}

/// Monte-Carlo estimate of `int_0^1 L(Phi(t)) dt` with `n_samples` uniform `t`.
pub fn avg_loss_along_path<O: Objective + ?Sized>(
    path: &BezierPath,
    objective: &O,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    check_dim("objective dimension", objective.dim(), path.param_count())?;
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let mut rng = rng::derive(seed, 0xa1);
    let total: f64 = (0..n_samples)
        .map(|_| {
            let t = rng::uniform(&mut rng, 0.0, 1.0);
            objective.loss(&eval_unchecked(path, t))
        })
        .sum();
    Ok(total / n_samples as f64)
}

/// Control-point optimiser settings.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ControlOptConfig {
    pub lr: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub mc_samples: usize,
    pub seed: u64,
    /// Mini-batch size per sampled `t`; ignored when `full_batch` is set.
    pub batch_size: usize,
    pub full_batch: bool,
}

impl Default for ControlOptConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            tol: 1e-5,
            max_iters: 300,
            mc_samples: 2,
            seed: 0,
            batch_size: 256,
            full_batch: false,
        }
    }
}

impl ControlOptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.tol > 0.0) || self.mc_samples == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "lr, tol, mc_samples and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptStep {
    pub iteration: usize,
    /// Monte-Carlo loss averaged over the sampled `t`.
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptTrace {
    pub steps: Vec<OptStep>,
    /// The gradient norm fell below `tol` before `max_iters`.
    pub converged: bool,
}

impl OptTrace {
    /// Mean loss over the first and the last `window` recorded iterations.
    pub fn smoothed_endpoints(&self, window: usize) -> Option<(f64, f64)> {
        if self.steps.is_empty() {
            return None;
        }
        let w = window.clamp(1, self.steps.len());
        let mean = |s: &[OptStep]| s.iter().map(|x| x.loss).sum::<f64>() / s.len() as f64;
        Some((mean(&self.steps[..w]), mean(&self.steps[self.steps.len() - w..])))
    }
}

/// Fits `phi` between fixed endpoints. Starts from the midpoint; each
/// iteration draws `mc_samples` values `t_i ~ U(0,1)`, averages
/// `2 t_i (1 - t_i) grad L(Phi(t_i))` using the objective's stochastic
/// gradient, and takes a plain gradient step. Stops when the averaged
/// gradient norm drops below `tol` or after `max_iters` iterations.
pub fn optimize_control_point<O: Objective + ?Sized>(
    theta0: &ParamVector,
    theta_t: &ParamVector,
    objective: &O,
    config: &ControlOptConfig,
) -> Result<(BezierPath, OptTrace)> {
    config.validate()?;
    check_dim("path end", theta0.len(), theta_t.len())?;
    check_dim("objective dimension", objective.dim(), theta0.len())?;
    let mut path = BezierPath::linear(theta0.clone(), theta_t.clone())?;
    let mut trace = OptTrace::default();
    let mut rng = rng::derive(config.seed, 0xb3);
    let weight = 1.0 / config.mc_samples as f64;
    let mut grad = alloc::vec![0.0; theta0.len()];
    for iteration in 0..config.max_iters {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for _ in 0..config.mc_samples {
            let t = rng::uniform(&mut rng, 0.0, 1.0);
            let point = eval_unchecked(&path, t);
            let (l, g) = objective.sampled_loss_and_grad(&point, &mut rng);
            loss += weight * l;
            vector::axpy(weight * 2.0 * t * (1.0 - t), &g, &mut grad);
        }
        if !loss.is_finite() || !vector::all_finite(&grad) {
            return Err(Error::ControlPointDiverged { iteration });
        }
        let grad_norm = vector::norm(&grad);
        trace.steps.push(OptStep {
            iteration,
            loss,
            grad_norm,
        });
        if grad_norm < config.tol {
            trace.converged = true;
            break;
        }
        vector::axpy(-config.lr, &grad, &mut path.phi);
    }
    Ok((path, trace))
}
