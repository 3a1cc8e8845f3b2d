//! SGD expert trajectories: training, piecewise-linear interpolation and
//! discrete curvature.

use alloc::vec::Vec;

use crate::data::TabularDataset;
use crate::error::{check_dim, Error, Result};
use crate::net::{self, init_params, MlpSpec, ParamVector};
use crate::objective::{DatasetObjective, Objective};
use crate::rng;
use crate::train::{train_epochs, TrainOptions};
use crate::vector;

/// Expert optimiser settings.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs between stored checkpoints.
    pub snapshot_every: usize,
    /// Seed of the shuffling (and dropout) stream.
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 0.02,
            momentum: 0.9,
            epochs: 100,
            batch_size: 256,
            snapshot_every: 1,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is accepted: it yields a constant trajectory.
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument("expert lr must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument("momentum must lie in [0, 1)".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.snapshot_every == 0 {
            return Err(Error::InvalidArgument(
                "epochs, batch_size and snapshot_every must be positive".into(),
            ));
        }
        if self.snapshot_every > self.epochs {
            return Err(Error::InvalidArgument("snapshot_every exceeds epochs".into()));
        }
        Ok(())
    }

    pub fn checkpoint_count(&self) -> usize {
        self.epochs / self.snapshot_every + 1
    }
}

/// Checkpoints of one expert run, `theta_0 .. theta_K`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trajectory {
    pub spec: MlpSpec,
    pub config: SgdConfig,
    pub checkpoints: Vec<ParamVector>,
    /// Full train-set loss at every checkpoint.
    pub train_losses: Vec<f64>,
    /// `||grad L(theta_K)||` on the full train split.
    pub endpoint_grad_norm: f64,
}

impl Trajectory {
    /// Number of segments `K`.
    pub fn segments(&self) -> usize {
        self.checkpoints.len().saturating_sub(1)
    }

    pub fn start(&self) -> &ParamVector {
        &self.checkpoints[0]
    }

    pub fn end(&self) -> &ParamVector {
        self.checkpoints.last().expect("trajectory is never empty")
    }

    pub fn param_count(&self) -> usize {
        self.checkpoints[0].len()
    }

    /// An expert is usable when its final loss is strictly below its initial loss.
    pub fn is_accepted(&self) -> bool {
        match (self.train_losses.first(), self.train_losses.last()) {
            (Some(a), Some(b)) => b < a,
            _ => false,
        }
    }
}

/// Trains one expert on the train split, storing the initial state and every
/// `snapshot_every`-th epoch. Weights come from `spec.seed`, the data order
/// (and dropout masks) from `config.seed`.
pub fn train_expert(dataset: &TabularDataset, spec: &MlpSpec, config: &SgdConfig) -> Result<Trajectory> {
    spec.validate()?;
    config.validate()?;
    check_dim("dataset features", spec.input_dim(), dataset.feature_dim())?;
    let train = &dataset.train;
    let objective = DatasetObjective::new(spec, &train.inputs, &train.labels)?;
    let theta0 = init_params(spec, spec.seed);

    let mut checkpoints = Vec::with_capacity(config.checkpoint_count());
    let mut train_losses = Vec::with_capacity(config.checkpoint_count());
    train_losses.push(objective.loss(&theta0));
    checkpoints.push(theta0.clone());

    let opts = TrainOptions {
        lr: config.lr,
        momentum: config.momentum,
        epochs: config.epochs,
        batch_size: config.batch_size,
        dropout: true,
    };
    let mut stream = rng::derive(config.seed, 1);
    let final_params = train_epochs(
        spec,
        theta0,
        &train.inputs,
        &train.labels,
        &opts,
        &mut stream,
        |epoch, params| {
            if epoch % config.snapshot_every == 0 {
                let loss = objective.loss(params);
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch });
                }
                train_losses.push(loss);
                checkpoints.push(params.clone());
            }
            Ok(())
        },
    )?;
    let (_, grad) = objective.loss_and_grad(&final_params);
    Ok(Trajectory {
        spec: spec.clone(),
        config: config.clone(),
        checkpoints,
        train_losses,
        endpoint_grad_norm: vector::norm(&grad),
    })
}

/// Piecewise-linear interpolation over checkpoint index: `u = t * K` falls in
/// segment `floor(u)`. Endpoints are returned exactly.
pub fn interp_gamma(traj: &Trajectory, t: f64) -> Result<ParamVector> {
    interp_checkpoints(&traj.checkpoints, t)
}

pub(crate) fn interp_checkpoints(checkpoints: &[ParamVector], t: f64) -> Result<ParamVector> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(alloc::format!("t = {t} outside [0, 1]")));
    }
    let k_max = checkpoints.len() - 1;
    if t == 0.0 || k_max == 0 {
        return Ok(checkpoints[0].clone());
    }
    if t == 1.0 {
        return Ok(checkpoints[k_max].clone());
    }
    let u = t * k_max as f64;
    let k = (libm::floor(u) as usize).min(k_max - 1);
    let frac = u - k as f64;
    let (a, b) = (&checkpoints[k], &checkpoints[k + 1]);
    Ok(ParamVector(
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (1.0 - frac) * x + frac * y)
            .collect(),
    ))
}

/// `||theta_{k+1} - 2 theta_k + theta_{k-1}||` for `k = 1 .. K-1`.
pub fn second_differences(traj: &Trajectory) -> Result<Vec<f64>> {
    second_differences_of(&traj.checkpoints)
}

pub(crate) fn second_differences_of(checkpoints: &[ParamVector]) -> Result<Vec<f64>> {
    if checkpoints.len() < 3 {
        return Err(Error::TrajectoryTooShort {
            checkpoints: checkpoints.len(),
            required: 3,
        });
    }
    Ok(checkpoints
        .windows(3)
        .map(|w| {
            libm::sqrt(
                w[0].iter()
                    .zip(w[1].iter())
                    .zip(w[2].iter())
                    .map(|((a, b), c)| {
                        let d = c - 2.0 * b + a;
                        d * d
                    })
                    .sum(),
            )
        })
        .collect())
}

/// Full train-set loss of a parameter vector, inference mode.
pub fn train_loss(dataset: &TabularDataset, spec: &MlpSpec, params: &[f64]) -> Result<f64> {
    check_dim("parameter vector", spec.param_count(), params.len())?;
    check_dim("dataset features", spec.input_dim(), dataset.feature_dim())?;
    Ok(net::loss_unchecked(
        spec,
        params,
        &dataset.train.inputs,
        &dataset.train.labels,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toy_traj(points: Vec<Vec<f64>>) -> Trajectory {
        let n = points[0].len();
        Trajectory {
            spec: MlpSpec::new(vec![n.max(1), 1], 0.0, 0).unwrap(),
            config: SgdConfig::default(),
            train_losses: vec![0.0; points.len()],
            checkpoints: points.into_iter().map(ParamVector).collect(),
            endpoint_grad_norm: 0.0,
        }
    }

    #[test]
    fn gamma_endpoints_and_segments() {
        let tr = toy_traj(vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![10.0, -1.0]]);
        assert_eq!(interp_gamma(&tr, 0.0).unwrap(), tr.checkpoints[0]);
        assert_eq!(interp_gamma(&tr, 1.0).unwrap(), tr.checkpoints[2]);
        let mid = interp_gamma(&tr, 0.25).unwrap();
        assert_eq!(mid.0, vec![1.0, 2.0]);
        assert!(interp_gamma(&tr, 1.5).is_err());
        assert!(interp_gamma(&tr, -0.1).is_err());
    }

    #[test]
    fn straight_line_has_zero_second_differences() {
        let pts: Vec<Vec<f64>> = (0..6).map(|k| vec![k as f64, -2.0 * k as f64, 0.5]).collect();
        let d = second_differences(&toy_traj(pts)).unwrap();
        assert_eq!(d.len(), 4);
        assert!(d.iter().all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn second_difference_hand_value() {
        let n = 7;
        let tr = toy_traj(vec![vec![0.0; n], vec![1.0; n], vec![3.0; n]]);
        let d = second_differences(&tr).unwrap();
        assert!((d[0] - (n as f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn too_few_checkpoints() {
        let tr = toy_traj(vec![vec![0.0], vec![1.0]]);
        assert!(matches!(
            second_differences(&tr),
            Err(Error::TrajectoryTooShort { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = SgdConfig::default();
        assert!(c.validate().is_ok());
        c.snapshot_every = 101;
        assert!(c.validate().is_err());
        c.snapshot_every = 1;
        c.momentum = 1.0;
        assert!(c.validate().is_err());
        assert_eq!(SgdConfig::default().checkpoint_count(), 101);
    }
}
