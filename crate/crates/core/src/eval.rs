//! From-scratch evaluation of a training set (condensed or real) on a held-out split.

use alloc::vec::Vec;

use crate::data::{sample_real_rows, Split, TabularDataset};
use crate::condense::SyntheticDataset;
use crate::error::{check_dim, Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{auprc, auroc};
use crate::net::{self, init_params, MlpSpec};
use crate::rng;
use crate::train::{train_epochs, TrainOptions};
use crate::vector;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct EvalConfig {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub n_seeds: usize,
    pub batch_size: usize,
    /// Seed `i` of a run is `seed + i`.
    pub seed: u64,
    /// Train with the network's dropout rate.
    pub dropout: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            momentum: 0.9,
            epochs: 100,
            n_seeds: 10,
            batch_size: 256,
            seed: 0,
            dropout: true,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument("eval lr must be positive and momentum in [0, 1)".into()));
        }
        if self.epochs == 0 || self.n_seeds == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("eval epochs, n_seeds and batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.n_seeds as u64).map(move |i| self.seed.wrapping_add(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SeedResult {
    pub seed: u64,
    pub auroc: f64,
    pub auprc: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricSummary {
    pub auroc_mean: f64,
    pub auroc_std: f64,
    pub auprc_mean: f64,
    pub auprc_std: f64,
    /// Successful seeds, in seed order.
    pub per_seed: Vec<SeedResult>,
    /// Seeds whose training diverged; excluded from the aggregate.
    pub failed_seeds: Vec<u64>,
}

impl MetricSummary {
    /// Aggregates per-seed outcomes. Diverged seeds are dropped and listed;
    /// if at least half of the seeds diverged the whole evaluation fails.
    pub fn from_outcomes(outcomes: Vec<(u64, Result<SeedResult>)>) -> Result<Self> {
        let total = outcomes.len();
        let mut per_seed = Vec::with_capacity(total);
        let mut failed_seeds = Vec::new();
        for (seed, outcome) in outcomes {
            match outcome {
                Ok(r) => per_seed.push(r),
                Err(Error::Diverged { .. }) => failed_seeds.push(seed),
                Err(e) => return Err(e),
            }
        }
        if total == 0 || 2 * failed_seeds.len() >= total {
            return Err(Error::EvaluationFailed {
                failed: failed_seeds.len(),
                total,
            });
        }
        let ar: Vec<f64> = per_seed.iter().map(|r| r.auroc).collect();
        let ap: Vec<f64> = per_seed.iter().map(|r| r.auprc).collect();
        Ok(Self {
            auroc_mean: vector::mean(&ar),
            auroc_std: vector::std_dev(&ar),
            auprc_mean: vector::mean(&ap),
            auprc_std: vector::std_dev(&ap),
            per_seed,
            failed_seeds,
        })
    }

    pub fn has_failures(&self) -> bool {
        !self.failed_seeds.is_empty()
    }
}

/// Trains a network initialised from `seed` on `(inputs, labels)` and returns
/// `(AUROC, AUPRC)` of its probabilities on `split`.
pub fn train_and_score(
    inputs: &Matrix,
    labels: &[f64],
    spec: &MlpSpec,
    split: &Split,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    check_dim("evaluation features", spec.input_dim(), split.inputs.cols())?;
    let opts = TrainOptions {
        lr: cfg.lr,
        momentum: cfg.momentum,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        dropout: cfg.dropout,
    };
    let mut stream = rng::derive(seed, 2);
    let params = train_epochs(spec, init_params(spec, seed), inputs, labels, &opts, &mut stream, |_, _| Ok(()))?;
    let scores = net::forward(spec, &params, &split.inputs)?;
    if !vector::all_finite(&scores) {
        return Err(Error::Diverged { epoch: cfg.epochs });
    }
    Ok((auroc(&scores, &split.labels)?, auprc(&scores, &split.labels)?))
}

/// One evaluation seed.
pub fn evaluate_seed(
    inputs: &Matrix,
    labels: &[f64],
    spec: &MlpSpec,
    test: &Split,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<SeedResult> {
    let (auroc, auprc) = train_and_score(inputs, labels, spec, test, cfg, seed)?;
    Ok(SeedResult { seed, auroc, auprc })
}

/// Sequential evaluation of an arbitrary training set over `cfg.n_seeds` seeds.
pub fn evaluate_training_set(
    inputs: &Matrix,
    labels: &[f64],
    spec: &MlpSpec,
    test: &Split,
    cfg: &EvalConfig,
) -> Result<MetricSummary> {
    cfg.validate()?;
    let outcomes = cfg
        .seeds()
        .map(|s| (s, evaluate_seed(inputs, labels, spec, test, cfg, s)))
        .collect();
    MetricSummary::from_outcomes(outcomes)
}

pub fn evaluate_synthetic(
    synth: &SyntheticDataset,
    spec: &MlpSpec,
    test: &Split,
    cfg: &EvalConfig,
) -> Result<MetricSummary> {
    evaluate_training_set(&synth.inputs, &synth.labels, spec, test, cfg)
}

/// `ipc` uniformly chosen real train rows per class.
pub fn random_coreset(dataset: &TabularDataset, ipc: usize, seed: u64) -> Result<SyntheticDataset> {
    if ipc == 0 {
        return Err(Error::InvalidArgument("ipc must be positive".into()));
    }
    sample_real_rows(dataset, ipc, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_seed_has_zero_std() {
        let s = MetricSummary::from_outcomes(alloc::vec![(
            3,
            Ok(SeedResult {
                seed: 3,
                auroc: 0.8,
                auprc: 0.4
            })
        )])
        .unwrap();
        assert_eq!(s.auroc_std, 0.0);
        assert_eq!(s.auprc_std, 0.0);
    }

    #[test]
    fn failure_policy() {
        let ok = |seed| (seed, Ok(SeedResult { seed, auroc: 0.7, auprc: 0.3 }));
        let bad = |seed| (seed, Err(Error::Diverged { epoch: 1 }));
        let s = MetricSummary::from_outcomes(alloc::vec![ok(0), bad(1), ok(2)]).unwrap();
        assert_eq!(s.failed_seeds, alloc::vec![1]);
        assert_eq!(s.per_seed.len(), 2);
        assert!(MetricSummary::from_outcomes(alloc::vec![ok(0), bad(1)]).is_err());
        let other = (5, Err(Error::SingleClass));
        assert_eq!(MetricSummary::from_outcomes(alloc::vec![ok(0), other]).unwrap_err(), Error::SingleClass);
    }
}
