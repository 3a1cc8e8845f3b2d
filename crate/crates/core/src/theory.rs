//! Numerical checks of the surrogate guarantees: near-optimal average loss,
//! low curvature relative to SGD, and bounded prediction deviation.
//!
//! Smoothness and Lipschitz constants are plug-in estimates, i.e. lower bounds
//! of the true constants, so a violated inequality is reported rather than
//! treated as a contradiction.

use alloc::vec::Vec;

use crate::bezier::{eval_unchecked, path_curvature, BezierPath};
use crate::data::TabularDataset;
use crate::error::{check_dim, Error, Result};
use crate::matrix::Matrix;
use crate::net::{self, MlpSpec, ParamVector};
use crate::objective::{DatasetObjective, Objective};
use crate::quadrature;
use crate::rng;
use crate::trajectory::{interp_checkpoints, second_differences, Trajectory};
use crate::vector;

/// Largest endpoint discrepancy tolerated between a surrogate and its trajectory.
pub const ENDPOINT_TOLERANCE: f64 = 1e-6;

/// `int_0^1 (t (1 - t))^2 dt`.
pub const BERNSTEIN_PRODUCT_INTEGRAL: f64 = 1.0 / 30.0;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct TheoryConfig {
    /// Grid points in `t`; `4m + 1` gives composite Boole weights.
    pub n_t: usize,
    /// Train rows used for prediction comparisons.
    pub n_x: usize,
    /// Gradient-difference pairs drawn per probe point.
    pub beta_pairs: usize,
    pub beta_radius: f64,
    /// Probe points per path for the smoothness estimate.
    pub beta_probes: usize,
    pub seed: u64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            n_t: 65,
            n_x: 256,
            beta_pairs: 8,
            beta_radius: 1e-3,
            beta_probes: 5,
            seed: 0,
        }
    }
}

/// Plug-in smoothness constant: the largest `||grad L(theta + r d) - grad L(theta)|| / r`
/// over `n_pairs` directions per probe point. The first direction is uniform on
/// the sphere; each later one is the normalised gradient difference of the
/// previous pair, which steers the search towards the top curvature direction.
pub fn estimate_beta<O: Objective + ?Sized>(
    objective: &O,
    probe_points: &[ParamVector],
    n_pairs: usize,
    radius: f64,
    seed: u64,
) -> Result<f64> {
    if n_pairs == 0 || !(radius > 0.0) {
        return Err(Error::InvalidArgument("estimate_beta needs n_pairs >= 1 and radius > 0".into()));
    }
    let mut rng = rng::derive(seed, 0xbe7a);
    let mut best: f64 = 0.0;
    for theta in probe_points {
        check_dim("probe point", objective.dim(), theta.len())?;
        let (_, g0) = objective.loss_and_grad(theta);
        let mut dir = rng::unit_direction(&mut rng, theta.len());
        for _ in 0..n_pairs {
            let shifted: Vec<f64> = theta.iter().zip(&dir).map(|(p, d)| p + radius * d).collect();
            let (_, g1) = objective.loss_and_grad(&shifted);
            let diff = vector::sub(&g1, &g0);
            let n = vector::norm(&diff);
            best = best.max(n / radius);
            if !(n > 0.0) || !n.is_finite() {
                dir = rng::unit_direction(&mut rng, theta.len());
            } else {
                dir = vector::scale(1.0 / n, &diff);
            }
        }
    }
    Ok(best)
}

fn check_endpoints(traj: &Trajectory, path: &BezierPath) -> Result<()> {
    check_dim("surrogate parameters", traj.param_count(), path.param_count())?;
    let gap = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let worst = gap(traj.start(), &path.theta0).max(gap(traj.end(), &path.theta_t));
    if worst > ENDPOINT_TOLERANCE {
        return Err(Error::EndpointMismatch(worst));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundCheck {
    pub kappa: f64,
    pub beta_hat: f64,
    pub avg_loss_bezier: f64,
    pub avg_loss_gamma: f64,
    /// `avg_loss_gamma + beta_hat * kappa^2 / 240`.
    pub bound_rhs: f64,
    pub holds: bool,
}

/// Average loss along both paths on one deterministic `t` grid, compared with
/// the curvature-penalised bound.
pub fn check_bound_avg_loss(
    traj: &Trajectory,
    path: &BezierPath,
    dataset: &TabularDataset,
    spec: &MlpSpec,
    cfg: &TheoryConfig,
) -> Result<BoundCheck> {
    check_endpoints(traj, path)?;
    let objective = DatasetObjective::new(spec, &dataset.train.inputs, &dataset.train.labels)?;
    let grid = quadrature::uniform_grid(cfg.n_t);
    let mut bez = Vec::with_capacity(grid.len());
    let mut gam = Vec::with_capacity(grid.len());
    for &t in &grid {
        bez.push(objective.loss(&eval_unchecked(path, t)));
        gam.push(objective.loss(&interp_checkpoints(&traj.checkpoints, t)?));
    }
    let avg_loss_bezier = quadrature::integrate_samples(&bez)?;
    let avg_loss_gamma = quadrature::integrate_samples(&gam)?;

    let probes = probe_points(traj, path, cfg.beta_probes)?;
    let beta_hat = estimate_beta(&objective, &probes, cfg.beta_pairs, cfg.beta_radius, cfg.seed)?;
    let kappa = path_curvature(path);
    let bound_rhs = avg_loss_gamma + beta_hat * kappa * kappa / 240.0;
    Ok(BoundCheck {
        kappa,
        beta_hat,
        avg_loss_bezier,
        avg_loss_gamma,
        bound_rhs,
        holds: avg_loss_bezier <= bound_rhs,
    })
}

fn probe_points(traj: &Trajectory, path: &BezierPath, per_path: usize) -> Result<Vec<ParamVector>> {
    let mut out = Vec::with_capacity(2 * per_path);
    for &t in &quadrature::uniform_grid(per_path.max(1)) {
        out.push(eval_unchecked(path, t));
        out.push(interp_checkpoints(&traj.checkpoints, t)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurvatureCheck {
    pub kappa: f64,
    pub second_diff_max: f64,
    pub second_diff_mean: f64,
    /// `max_k ||Delta_k|| * K^2`, the unit-time curvature of the interpolated trajectory.
    pub sgd_max_rescaled: f64,
    pub sgd_mean_rescaled: f64,
    pub sgd_exceeds_kappa: bool,
}

pub fn check_curvature(traj: &Trajectory, path: &BezierPath) -> Result<CurvatureCheck> {
    check_endpoints(traj, path)?;
    let diffs = second_differences(traj)?;
    let k = traj.segments() as f64;
    let max = diffs.iter().cloned().fold(0.0, f64::max);
    let mean = vector::mean(&diffs);
    let kappa = path_curvature(path);
    Ok(CurvatureCheck {
        kappa,
        second_diff_max: max,
        second_diff_mean: mean,
        sgd_max_rescaled: max * k * k,
        sgd_mean_rescaled: mean * k * k,
        sgd_exceeds_kappa: max * k * k >= kappa,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PredictionCheck {
    pub lipschitz_hat: f64,
    /// `max_{t, x} |f_Phi(t)(x) - f_gamma(t)(x)|` on logits.
    pub pred_dev_sup: f64,
    /// `lipschitz_hat * kappa / 8`.
    pub pred_bound_rhs: f64,
    /// `pred_dev_sup / pred_bound_rhs`; `None` when the bound is zero but the deviation is not.
    pub ratio: Option<f64>,
}

/// Logit deviation between the surrogate and the interpolated trajectory at
/// matching times, against the Lipschitz bound. Advisory only.
pub fn check_prediction_deviation(
    traj: &Trajectory,
    path: &BezierPath,
    dataset: &TabularDataset,
    spec: &MlpSpec,
    cfg: &TheoryConfig,
) -> Result<PredictionCheck> {
    check_endpoints(traj, path)?;
    check_dim("surrogate parameters", spec.param_count(), path.param_count())?;
    let train = &dataset.train;
    let mut rng = rng::derive(cfg.seed, 0x9d);
    let rows = rng::sample_without_replacement(&mut rng, train.len(), cfg.n_x.min(train.len()).max(1));
    let x: Matrix = train.inputs.select_rows(&rows);

    let grid = quadrature::uniform_grid(cfg.n_t);
    let mut bez = Vec::with_capacity(grid.len());
    let mut gam = Vec::with_capacity(grid.len());
    for &t in &grid {
        let p = eval_unchecked(path, t);
        let g = interp_checkpoints(&traj.checkpoints, t)?;
        let lp = net::logits(spec, &p, &x)?;
        let lg = net::logits(spec, &g, &x)?;
        bez.push((p, lp));
        gam.push((g, lg));
    }

    let mut lipschitz_hat: f64 = 0.0;
    let mut ratio_of = |a: &(ParamVector, Vec<f64>), b: &(ParamVector, Vec<f64>)| {
        let d = vector::dist(&a.0, &b.0);
        if d > 1e-12 {
            let dev = a.1.iter().zip(&b.1).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
            lipschitz_hat = lipschitz_hat.max(dev / d);
        }
    };
    for i in 0..grid.len() {
        ratio_of(&bez[i], &gam[i]);
        if i + 1 < grid.len() {
            ratio_of(&bez[i], &bez[i + 1]);
            ratio_of(&gam[i], &gam[i + 1]);
        }
    }
    let pred_dev_sup = bez
        .iter()
        .zip(&gam)
        .flat_map(|(a, b)| a.1.iter().zip(&b.1).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max);
    let pred_bound_rhs = lipschitz_hat * path_curvature(path) / 8.0;
    let ratio = if pred_dev_sup == 0.0 {
        Some(0.0)
    } else if pred_bound_rhs > 0.0 {
        Some(pred_dev_sup / pred_bound_rhs)
    } else {
        None
    };
    Ok(PredictionCheck {
        lipschitz_hat,
        pred_dev_sup,
        pred_bound_rhs,
        ratio,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TheoremReport {
    pub kappa: f64,
    pub beta_hat: f64,
    /// `||grad L(theta_T)||` on the train split.
    pub eps_hat: f64,
    pub avg_loss_bezier: f64,
    pub avg_loss_gamma: f64,
    pub bound_rhs: f64,
    pub bound_holds: bool,
    /// The surrogate's curvature is constant, so its supremum is `kappa`.
    pub bezier_sup_curv: f64,
    pub sgd_second_diff_max: f64,
    pub sgd_second_diff_mean: f64,
    pub sgd_max_rescaled: f64,
    pub sgd_exceeds_kappa: bool,
    pub lipschitz_hat: f64,
    pub pred_dev_sup: f64,
    pub pred_bound_rhs: f64,
    pub pred_ratio: Option<f64>,
    pub n_t_samples: usize,
    pub n_x_samples: usize,
}

pub fn theorem_report(
    traj: &Trajectory,
    path: &BezierPath,
    dataset: &TabularDataset,
    spec: &MlpSpec,
    cfg: &TheoryConfig,
) -> Result<TheoremReport> {
    let bound = check_bound_avg_loss(traj, path, dataset, spec, cfg)?;
    let curv = check_curvature(traj, path)?;
    let pred = check_prediction_deviation(traj, path, dataset, spec, cfg)?;
    let objective = DatasetObjective::new(spec, &dataset.train.inputs, &dataset.train.labels)?;
    let (_, g) = objective.loss_and_grad(traj.end());
    Ok(TheoremReport {
        kappa: bound.kappa,
        beta_hat: bound.beta_hat,
        eps_hat: vector::norm(&g),
        avg_loss_bezier: bound.avg_loss_bezier,
        avg_loss_gamma: bound.avg_loss_gamma,
        bound_rhs: bound.bound_rhs,
        bound_holds: bound.holds,
        bezier_sup_curv: curv.kappa,
        sgd_second_diff_max: curv.second_diff_max,
        sgd_second_diff_mean: curv.second_diff_mean,
        sgd_max_rescaled: curv.sgd_max_rescaled,
        sgd_exceeds_kappa: curv.sgd_exceeds_kappa,
        lipschitz_hat: pred.lipschitz_hat,
        pred_dev_sup: pred.pred_dev_sup,
        pred_bound_rhs: pred.pred_bound_rhs,
        pred_ratio: pred.ratio,
        n_t_samples: cfg.n_t,
        n_x_samples: cfg.n_x.min(dataset.train.len()),
    })
}
