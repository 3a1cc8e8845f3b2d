//! Trajectory-matching condensation.
//!
//! Each iteration picks a segment `(theta_start, theta_target)` from a
//! supervision source (Bezier surrogates, or stored expert checkpoints for the
//! MTT baseline), unrolls a student for `N` plain-SGD steps on the synthetic
//! set, and scores it with the normalised matching loss
//! `||theta_N - theta_target||^2 / ||theta_start - theta_target||^2`.
//! The synthetic inputs and the student step size are then updated with the
//! first-order meta-gradients, which treat `g_L` and every unrolled
//! `theta_i` as constants.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::bezier::{eval_unchecked, BezierPath};
use crate::data::TabularDataset;
use crate::error::{check_dim, Error, Result};
use crate::eval::{train_and_score, EvalConfig};
use crate::matrix::Matrix;
use crate::net::{self, MlpSpec, ParamVector};
use crate::rng;
use crate::trajectory::Trajectory;
use crate::vector;

/// Lower bound kept on the learnable student step size.
pub const MIN_STUDENT_LR: f64 = 1e-6;
/// Segments whose endpoints are closer than this are resampled.
pub const DEGENERATE_SEGMENT: f64 = 1e-12;
const MAX_SEGMENT_ATTEMPTS: usize = 100;

/// Learnable synthetic set with fixed, class-balanced hard labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub inputs: Matrix,
    pub labels: Vec<f64>,
    /// Student step size, itself meta-learned.
    pub eta_s: f64,
    pub ipc: usize,
}

impl SyntheticDataset {
    pub fn new(inputs: Matrix, labels: Vec<f64>, eta_s: f64) -> Result<Self> {
        check_dim("synthetic labels", inputs.rows(), labels.len())?;
        let pos = labels.iter().filter(|&&y| y == 1.0).count();
        let neg = labels.iter().filter(|&&y| y == 0.0).count();
        if pos + neg != labels.len() {
            return Err(Error::InvalidArgument("synthetic labels must be 0 or 1".into()));
        }
        if pos != neg || pos == 0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "synthetic set must be class balanced, got {neg} negatives and {pos} positives"
            )));
        }
        if !(eta_s > 0.0) {
            return Err(Error::InvalidArgument("eta_s must be positive".into()));
        }
        Ok(Self {
            inputs,
            labels,
            eta_s,
            ipc: pos,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// How matching segments are drawn from a surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SegmentScheme {
    /// `t_start ~ U(0, t_start_max)`, `t_end = t_start + segment_length`.
    #[default]
    FixedLength,
    /// `t_start < t_end`, both from `U(0, 1)`.
    UniformPair,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct CondenseConfig {
    pub segment_length: f64,
    pub t_start_max: f64,
    pub segment_scheme: SegmentScheme,
    pub student_steps: usize,
    pub meta_lr: f64,
    pub meta_momentum: f64,
    pub eta_s_lr: f64,
    pub eta_s_momentum: f64,
    /// Student mini-batch; `None` means `max(2 * ipc, 256)`.
    pub batch_size: Option<usize>,
    pub max_iters: usize,
    pub eval_every: usize,
    pub seed: u64,
    /// Expert epochs `M` per segment for the MTT baseline.
    pub mtt_expert_epochs: usize,
    pub eval: EvalConfig,
}

impl Default for CondenseConfig {
    fn default() -> Self {
        Self {
            segment_length: 0.2,
            t_start_max: 0.8,
            segment_scheme: SegmentScheme::FixedLength,
            student_steps: 30,
            meta_lr: 100.0,
            meta_momentum: 0.9,
            eta_s_lr: 1e-4,
            eta_s_momentum: 0.5,
            batch_size: None,
            max_iters: 40_000,
            eval_every: 10,
            seed: 0,
            mtt_expert_epochs: 5,
            // Validation runs during condensation train for 50 epochs; the
            // final evaluation uses the full 100.
            eval: EvalConfig {
                epochs: 50,
                ..EvalConfig::default()
            },
        }
    }
}

impl CondenseConfig {
    pub fn validate(&self) -> Result<()> {
        let rates_ok = self.meta_lr > 0.0 && self.eta_s_lr > 0.0;
        let momenta_ok = (0.0..1.0).contains(&self.meta_momentum) && (0.0..1.0).contains(&self.eta_s_momentum);
        let segment_ok = self.segment_length > 0.0
            && self.t_start_max >= 0.0
            && self.t_start_max + self.segment_length <= 1.0 + 1e-12;
        if !rates_ok || !momenta_ok {
            return Err(Error::InvalidArgument("meta rates must be positive and momenta in [0, 1)".into()));
        }
        if !segment_ok {
            return Err(Error::InvalidArgument(
                "segments must satisfy 0 < segment_length and t_start_max + segment_length <= 1".into(),
            ));
        }
        if self.student_steps == 0 || self.eval_every == 0 || self.mtt_expert_epochs == 0 {
            return Err(Error::InvalidArgument(
                "student_steps, eval_every and mtt_expert_epochs must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn effective_batch_size(&self, ipc: usize) -> usize {
        self.batch_size.unwrap_or_else(|| (2 * ipc).max(256))
    }
}

/// A start/target pair for one matching step.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSegment {
    pub theta_start: ParamVector,
    pub theta_target: ParamVector,
    pub t_start: f64,
    pub t_end: f64,
}

impl MatchSegment {
    pub fn squared_span(&self) -> f64 {
        let d = vector::dist(&self.theta_start, &self.theta_target);
        d * d
    }
}

/// Samples a surrogate uniformly, then a segment on it per `cfg.segment_scheme`.
pub fn sample_segment(paths: &[BezierPath], cfg: &CondenseConfig, rng: &mut dyn RngCore) -> Result<MatchSegment> {
    if paths.is_empty() {
        return Err(Error::InvalidArgument("no surrogate paths to sample from".into()));
    }
    for _ in 0..MAX_SEGMENT_ATTEMPTS {
        let path = &paths[rng.random_range(0..paths.len())];
        let (t_start, t_end) = match cfg.segment_scheme {
            SegmentScheme::FixedLength => {
                let s = rng::uniform(rng, 0.0, cfg.t_start_max);
                (s, (s + cfg.segment_length).min(1.0))
            }
            SegmentScheme::UniformPair => {
                let a = rng::uniform(rng, 0.0, 1.0);
                let b = rng::uniform(rng, 0.0, 1.0);
                (a.min(b), a.max(b))
            }
        };
        if !(t_start < t_end) {
            continue;
        }
        let seg = MatchSegment {
            theta_start: eval_unchecked(path, t_start),
            theta_target: eval_unchecked(path, t_end),
            t_start,
            t_end,
        };
        if vector::dist(&seg.theta_start, &seg.theta_target) >= DEGENERATE_SEGMENT {
            return Ok(seg);
        }
    }
    Err(Error::DegenerateSegment)
}

/// MTT segment: `theta_k -> theta_{k+M}` with `k` uniform on `0..=K-M`.
pub fn mtt_baseline_segment(traj: &Trajectory, expert_epochs: usize, rng: &mut dyn RngCore) -> Result<MatchSegment> {
    let k_max = traj.segments();
    if expert_epochs == 0 || k_max < expert_epochs {
        return Err(Error::TrajectoryTooShort {
            checkpoints: traj.checkpoints.len(),
            required: expert_epochs + 1,
        });
    }
    let k = rng.random_range(0..=k_max - expert_epochs);
    let seg = MatchSegment {
        theta_start: traj.checkpoints[k].clone(),
        theta_target: traj.checkpoints[k + expert_epochs].clone(),
        t_start: k as f64 / k_max as f64,
        t_end: (k + expert_epochs) as f64 / k_max as f64,
    };
    if vector::dist(&seg.theta_start, &seg.theta_target) < DEGENERATE_SEGMENT {
        return Err(Error::DegenerateSegment);
    }
    Ok(seg)
}

/// One recorded student step: the mini-batch rows, the parameters the step
/// started from, and the mean mini-batch gradient there.
#[derive(Debug, Clone, PartialEq)]
pub struct TapeStep {
    pub batch: Vec<usize>,
    pub params: ParamVector,
    pub grad: ParamVector,
}

/// `N` plain-SGD steps from `theta_start` on the synthetic set, inference-mode
/// network (no dropout). When the batch size covers the whole set, every step
/// uses all rows; otherwise each step draws a fresh subset without replacement.
pub fn student_unroll(
    spec: &MlpSpec,
    theta_start: &ParamVector,
    synth: &SyntheticDataset,
    cfg: &CondenseConfig,
    rng: &mut dyn RngCore,
) -> Result<(ParamVector, Vec<TapeStep>)> {
    check_dim("student parameters", spec.param_count(), theta_start.len())?;
    check_dim("synthetic features", spec.input_dim(), synth.inputs.cols())?;
    let n = synth.len();
    let b = cfg.effective_batch_size(synth.ipc);
    let mut theta = theta_start.clone();
    let mut tape = Vec::with_capacity(cfg.student_steps);
    let full: Vec<usize> = (0..n).collect();
    for step in 0..cfg.student_steps {
        let batch = if b >= n {
            full.clone()
        } else {
            rng::sample_without_replacement(rng, n, b)
        };
        let x = synth.inputs.select_rows(&batch);
        let y: Vec<f64> = batch.iter().map(|&i| synth.labels[i]).collect();
        let (_, grad) = net::loss_and_grad_unchecked(spec, &theta, &x, &y, None);
        let next: Vec<f64> = theta.iter().zip(&grad).map(|(p, g)| p - synth.eta_s * g).collect();
        if !vector::all_finite(&next) {
            return Err(Error::StudentDiverged { step });
        }
        tape.push(TapeStep {
            batch,
            params: core::mem::replace(&mut theta, ParamVector(next)),
            grad: ParamVector(grad),
        });
    }
    Ok((theta, tape))
}

fn span(seg: &MatchSegment) -> Result<f64> {
    check_dim("segment target", seg.theta_start.len(), seg.theta_target.len())?;
    let denom = seg.squared_span();
    if denom <= 1e-24 {
        return Err(Error::DegenerateSegment);
    }
    Ok(denom)
}

/// Normalised matching loss.
pub fn matching_loss(theta_n: &[f64], seg: &MatchSegment) -> Result<f64> {
    let denom = span(seg)?;
    check_dim("student parameters", seg.theta_target.len(), theta_n.len())?;
    let num = vector::dist(theta_n, &seg.theta_target);
    Ok(num * num / denom)
}

/// `g_L = 2 (theta_N - theta_target) / ||theta_start - theta_target||^2`.
pub fn loss_grad_g_l(theta_n: &[f64], seg: &MatchSegment) -> Result<ParamVector> {
    let denom = span(seg)?;
    check_dim("student parameters", seg.theta_target.len(), theta_n.len())?;
    Ok(ParamVector(
        theta_n
            .iter()
            .zip(seg.theta_target.iter())
            .map(|(a, b)| 2.0 * (a - b) / denom)
            .collect(),
    ))
}

/// First-order meta-gradient for the synthetic inputs:
/// `-eta_s * sum_i grad_X <grad_theta mean_{B_i} l, g_L>` at each recorded
/// `theta_i`, scattered back to the synthetic rows. Rows never sampled get zero.
pub fn meta_grad_inputs(
    spec: &MlpSpec,
    tape: &[TapeStep],
    g_l: &[f64],
    synth: &SyntheticDataset,
) -> Result<Matrix> {
    check_dim("g_L", spec.param_count(), g_l.len())?;
    let mut out = Matrix::zeros(synth.len(), synth.inputs.cols());
    for step in tape {
        if let Some(&bad) = step.batch.iter().find(|&&i| i >= synth.len()) {
            return Err(Error::InvalidArgument(alloc::format!(
                "tape references synthetic row {bad} of {}",
                synth.len()
            )));
        }
        check_dim("tape parameters", spec.param_count(), step.params.len())?;
        let x = synth.inputs.select_rows(&step.batch);
        let y: Vec<f64> = step.batch.iter().map(|&i| synth.labels[i]).collect();
        let g = net::grad_inputs_unchecked(spec, &step.params, &x, &y, g_l);
        for (r, &row) in step.batch.iter().enumerate() {
            vector::axpy(-synth.eta_s, g.row(r), out.row_mut(row));
        }
    }
    Ok(out)
}

/// First-order meta-gradient for the student step size:
/// `<g_L, -sum_i gbar_i>`, exact for a single plain-SGD step.
pub fn meta_grad_eta_s(tape: &[TapeStep], g_l: &[f64]) -> f64 {
    -tape.iter().map(|s| vector::dot(g_l, &s.grad)).sum::<f64>()
}

/// Where matching segments come from.
#[derive(Debug, Clone, Copy)]
pub enum Supervision<'a> {
    /// Bezier surrogates, segments per [`CondenseConfig::segment_scheme`].
    Bezier(&'a [BezierPath]),
    /// Stored expert checkpoints, `M = cfg.mtt_expert_epochs` epochs apart.
    Mtt(&'a [Trajectory]),
}

impl Supervision<'_> {
    fn sample(&self, cfg: &CondenseConfig, rng: &mut dyn RngCore) -> Result<MatchSegment> {
        match self {
            Supervision::Bezier(paths) => sample_segment(paths, cfg, rng),
            Supervision::Mtt(trajs) => {
                if trajs.is_empty() {
                    return Err(Error::InvalidArgument("no expert trajectories".into()));
                }
                let traj = &trajs[rng.random_range(0..trajs.len())];
                mtt_baseline_segment(traj, cfg.mtt_expert_epochs, rng)
            }
        }
    }

    fn param_count(&self) -> Option<usize> {
        match self {
            Supervision::Bezier(p) => p.first().map(BezierPath::param_count),
            Supervision::Mtt(t) => t.first().map(Trajectory::param_count),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistoryRow {
    pub iteration: usize,
    /// Matching loss of this iteration's segment (`NaN` for the initial row).
    pub matching_loss: f64,
    pub eta_s: f64,
    pub val_auroc: Option<f64>,
    pub val_auprc: Option<f64>,
    /// Best validation AUPRC seen so far.
    pub best_val_auprc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondenseOutcome {
    pub best: SyntheticDataset,
    pub best_iteration: usize,
    pub final_synth: SyntheticDataset,
    pub history: Vec<HistoryRow>,
}

/// Runs the condensation loop. The set is scored on the validation split
/// before the first update and every `eval_every` iterations by training a
/// freshly initialised network on it; the best set by validation AUPRC is kept.
pub fn condense_run(
    supervision: Supervision<'_>,
    dataset: &TabularDataset,
    spec: &MlpSpec,
    synth0: &SyntheticDataset,
    cfg: &CondenseConfig,
) -> Result<CondenseOutcome> {
    cfg.validate()?;
    spec.validate()?;
    check_dim("synthetic features", spec.input_dim(), synth0.inputs.cols())?;
    if let Some(n) = supervision.param_count() {
        check_dim("supervision parameters", spec.param_count(), n)?;
    }

    let mut synth = synth0.clone();
    let mut history = Vec::with_capacity(cfg.max_iters + 1);
    if cfg.max_iters == 0 {
        return Ok(CondenseOutcome {
            best: synth.clone(),
            best_iteration: 0,
            final_synth: synth,
            history,
        });
    }

    let evaluate = |synth: &SyntheticDataset, iteration: usize| -> Result<(f64, f64)> {
        let seed = cfg.eval.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(iteration as u64 + 1));
        train_and_score(&synth.inputs, &synth.labels, spec, &dataset.val, &cfg.eval, seed)
            .map_err(|e| Error::Condense {
                iteration,
                source: Box::new(e),
            })
    };

    let (auroc0, auprc0) = evaluate(&synth, 0)?;
    let mut best = synth.clone();
    let mut best_iteration = 0;
    let mut best_auprc = auprc0;
    history.push(HistoryRow {
        iteration: 0,
        matching_loss: f64::NAN,
        eta_s: synth.eta_s,
        val_auroc: Some(auroc0),
        val_auprc: Some(auprc0),
        best_val_auprc: best_auprc,
    });

    let mut rng = rng::derive(cfg.seed, 0xc0de);
    let mut x_velocity = vec![0.0; synth.inputs.as_slice().len()];
    let mut eta_velocity = 0.0;
    for iteration in 1..=cfg.max_iters {
        let wrap = |e: Error| Error::Condense {
            iteration,
            source: Box::new(e),
        };
        let seg = supervision.sample(cfg, &mut rng).map_err(wrap)?;
        let (theta_n, tape) = student_unroll(spec, &seg.theta_start, &synth, cfg, &mut rng).map_err(wrap)?;
        let loss = matching_loss(&theta_n, &seg).map_err(wrap)?;
        let g_l = loss_grad_g_l(&theta_n, &seg).map_err(wrap)?;
        let grad_x = meta_grad_inputs(spec, &tape, &g_l, &synth).map_err(wrap)?;
        let grad_eta = meta_grad_eta_s(&tape, &g_l);
        if !grad_x.is_finite() || !grad_eta.is_finite() {
            return Err(wrap(Error::StudentDiverged { step: cfg.student_steps }));
        }

        net::sgd_step_in_place(
            synth.inputs.as_mut_slice(),
            grad_x.as_slice(),
            cfg.meta_lr,
            &mut x_velocity,
            cfg.meta_momentum,
        );
        eta_velocity = cfg.eta_s_momentum * eta_velocity + grad_eta;
        synth.eta_s = (synth.eta_s - cfg.eta_s_lr * eta_velocity).max(MIN_STUDENT_LR);

        let mut row = HistoryRow {
            iteration,
            matching_loss: loss,
            eta_s: synth.eta_s,
            val_auroc: None,
            val_auprc: None,
            best_val_auprc: best_auprc,
        };
        if iteration % cfg.eval_every == 0 || iteration == cfg.max_iters {
            let (auroc, auprc) = evaluate(&synth, iteration)?;
            if auprc > best_auprc {
                best_auprc = auprc;
                best = synth.clone();
                best_iteration = iteration;
            }
            row.val_auroc = Some(auroc);
            row.val_auprc = Some(auprc);
            row.best_val_auprc = best_auprc;
        }
        history.push(row);
    }
    Ok(CondenseOutcome {
        best,
        best_iteration,
        final_synth: synth,
        history,
    })
}
