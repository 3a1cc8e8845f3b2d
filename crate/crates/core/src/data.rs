//! Tabular data: raw tables, stratified splitting, train-only imputation and
//! normalisation, a Gaussian-mixture generator, and synthetic-set
//! initialisation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::condense::SyntheticDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;
use crate::vector;

pub const TRAIN_FRACTION: f64 = 0.70;
pub const VAL_FRACTION: f64 = 0.15;
/// Columns with a train-split standard deviation below this are only centred.
pub const STD_FLOOR: f64 = 1e-12;
/// Student step size given to freshly initialised synthetic sets.
pub const DEFAULT_STUDENT_LR: f64 = 0.01;

/// A parsed table; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
    pub labels: Vec<u8>,
}

impl RawTable {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<Option<f64>>>, labels: Vec<u8>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Table(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != feature_names.len() {
                return Err(Error::Table(format!(
                    "row {i} has {} cells, expected {}",
                    row.len(),
                    feature_names.len()
                )));
            }
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::Table(format!("row {i}: label {} is not binary", labels[i])));
        }
        Ok(Self {
            feature_names,
            rows,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.rows.iter().flatten().filter(|c| c.is_none()).count()
    }
}

/// One split of a dataset. `rows` are indices into the source table.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub inputs: Matrix,
    pub labels: Vec<f64>,
    pub rows: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1.0).count()
    }

    pub fn prevalence(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.positives() as f64 / self.len() as f64
        }
    }

    /// Row indices (into this split) of the given class.
    pub fn class_indices(&self, class: u8) -> Vec<usize> {
        let y = f64::from(class);
        (0..self.len()).filter(|&i| self.labels[i] == y).collect()
    }

    fn subset(&self, idx: &[usize]) -> Split {
        Split {
            inputs: self.inputs.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
        }
    }
}

/// Per-feature statistics fitted on the train split.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureStats {
    pub median: f64,
    pub mean: f64,
    pub std: f64,
}

/// Median imputation followed by z-scoring, both fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    pub stats: Vec<FeatureStats>,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl Preprocessor {
    pub fn fit(train_rows: &[&[Option<f64>]], n_features: usize) -> Self {
        let stats = (0..n_features)
            .map(|j| {
                let mut present: Vec<f64> = train_rows.iter().filter_map(|r| r[j]).collect();
                let med = median(&mut present);
                let imputed: Vec<f64> = train_rows.iter().map(|r| r[j].unwrap_or(med)).collect();
                FeatureStats {
                    median: med,
                    mean: vector::mean(&imputed),
                    std: vector::std_dev(&imputed),
                }
            })
            .collect();
        Self { stats }
    }

    pub fn impute(&self, row: &[Option<f64>]) -> Vec<f64> {
        row.iter()
            .zip(&self.stats)
            .map(|(c, s)| c.unwrap_or(s.median))
            .collect()
    }

    pub fn transform(&self, row: &[Option<f64>]) -> Vec<f64> {
        row.iter()
            .zip(&self.stats)
            .map(|(c, s)| {
                let v = c.unwrap_or(s.median) - s.mean;
                if s.std < STD_FLOOR {
                    v
                } else {
                    v / s.std
                }
            })
            .collect()
    }
}

/// Positive fraction of each split.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Prevalence {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub train: Split,
    pub val: Split,
    pub test: Split,
    pub feature_names: Vec<String>,
    pub normalization_stats: Vec<FeatureStats>,
    pub prevalence: Prevalence,
}

impl TabularDataset {
    pub fn feature_dim(&self) -> usize {
        self.feature_names.len()
    }

    fn refresh_prevalence(&mut self) {
        self.prevalence = Prevalence {
            train: self.train.prevalence(),
            val: self.val.prevalence(),
            test: self.test.prevalence(),
        };
    }
}

fn round(x: f64) -> usize {
    libm::round(x) as usize
}

/// Stratified 70/15/15 split, train-fitted median imputation and z-scoring.
pub fn preprocess(raw: &RawTable, split_seed: u64) -> Result<TabularDataset> {
    let n = raw.len();
    let pos: Vec<usize> = (0..n).filter(|&i| raw.labels[i] == 1).collect();
    let neg: Vec<usize> = (0..n).filter(|&i| raw.labels[i] == 0).collect();
    for (class, members) in [(0u8, &neg), (1u8, &pos)] {
        if members.len() < 10 {
            return Err(Error::InsufficientClassMembers {
                class,
                available: members.len(),
                requested: 10,
            });
        }
    }

    // Overall sizes are fixed first; the positive class gets its rounded
    // share and negatives fill the remainder.
    let n_train = round(TRAIN_FRACTION * n as f64);
    let n_val = round(VAL_FRACTION * n as f64);
    let pos_train = round(TRAIN_FRACTION * pos.len() as f64);
    let pos_val = round(VAL_FRACTION * pos.len() as f64).min(pos.len() - pos_train);
    let neg_train = n_train - pos_train;
    let neg_val = n_val - pos_val;

    let mut rng = rng::derive(split_seed, 0x5eed);
    let mut shuffle = |members: &[usize]| -> Vec<usize> {
        rng::shuffled(&mut rng, members.len())
            .into_iter()
            .map(|i| members[i])
            .collect()
    };
    let pos = shuffle(&pos);
    let neg = shuffle(&neg);

    let mut train_idx: Vec<usize> = pos[..pos_train].iter().chain(&neg[..neg_train]).copied().collect();
    let mut val_idx: Vec<usize> = pos[pos_train..pos_train + pos_val]
        .iter()
        .chain(&neg[neg_train..neg_train + neg_val])
        .copied()
        .collect();
    let mut test_idx: Vec<usize> = pos[pos_train + pos_val..]
        .iter()
        .chain(&neg[neg_train + neg_val..])
        .copied()
        .collect();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    test_idx.sort_unstable();

    let train_rows: Vec<&[Option<f64>]> = train_idx.iter().map(|&i| raw.rows[i].as_slice()).collect();
    let pre = Preprocessor::fit(&train_rows, raw.feature_names.len());
    let build = |idx: Vec<usize>| -> Result<Split> {
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| pre.transform(&raw.rows[i])).collect();
        let inputs = if rows.is_empty() {
            Matrix::zeros(0, raw.feature_names.len())
        } else {
            Matrix::from_rows(&rows)?
        };
        Ok(Split {
            inputs,
            labels: idx.iter().map(|&i| f64::from(raw.labels[i])).collect(),
            rows: idx,
        })
    };
    let mut ds = TabularDataset {
        train: build(train_idx)?,
        val: build(val_idx)?,
        test: build(test_idx)?,
        feature_names: raw.feature_names.clone(),
        normalization_stats: pre.stats,
        prevalence: Prevalence {
            train: 0.0,
            val: 0.0,
            test: 0.0,
        },
    };
    ds.refresh_prevalence();
    Ok(ds)
}

/// Settings of the two-class Gaussian-mixture generator.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct GenConfig {
    pub n_samples: usize,
    pub n_features: usize,
    pub prevalence: f64,
    /// Distance between the class means.
    pub class_separation: f64,
    pub noise_scale: f64,
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            n_features: 20,
            prevalence: 0.05,
            class_separation: 2.0,
            noise_scale: 1.0,
            missing_rate: 0.02,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(Error::InvalidArgument("prevalence must lie in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::InvalidArgument("missing_rate must lie in [0, 1)".into()));
        }
        if self.n_features == 0 || self.n_samples == 0 {
            return Err(Error::InvalidArgument("n_samples and n_features must be positive".into()));
        }
        if !(self.noise_scale > 0.0) || !(self.class_separation >= 0.0) {
            return Err(Error::InvalidArgument(
                "noise_scale must be positive and class_separation non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Direction of the positive-class mean (unit norm), as drawn by the generator.
    pub fn mean_direction(&self) -> Vec<f64> {
        let mut rng = rng::derive(self.seed, 0xd1);
        rng::unit_direction(&mut rng, self.n_features)
    }
}

/// Raw, unsplit draw from the generator: negatives `N(0, s^2 I)`, positives
/// `N(mu, s^2 I)` with `||mu|| = class_separation`; exactly
/// `round(prevalence * n)` positives; cells blanked at `missing_rate`.
pub fn generate_raw(cfg: &GenConfig) -> Result<RawTable> {
    cfg.validate()?;
    let mu: Vec<f64> = cfg
        .mean_direction()
        .into_iter()
        .map(|u| u * cfg.class_separation)
        .collect();
    let n_pos = round(cfg.prevalence * cfg.n_samples as f64);
    let mut rng = rng::derive(cfg.seed, 0xda7a);
    let mut labels = vec![0u8; cfg.n_samples];
    for i in rng::sample_without_replacement(&mut rng, cfg.n_samples, n_pos) {
        labels[i] = 1;
    }
    let rows = labels
        .iter()
        .map(|&y| {
            (0..cfg.n_features)
                .map(|j| {
                    let centre = if y == 1 { mu[j] } else { 0.0 };
                    let v = centre + cfg.noise_scale * rng::standard_normal(&mut rng);
                    let missing = cfg.missing_rate > 0.0 && rng::uniform(&mut rng, 0.0, 1.0) < cfg.missing_rate;
                    (!missing).then_some(v)
                })
                .collect()
        })
        .collect();
    let names = (0..cfg.n_features).map(|j| format!("f{j}")).collect();
    RawTable::new(names, rows, labels)
}

/// Generates and preprocesses a dataset; the split uses `cfg.seed`.
pub fn generate_synthetic_clinical(cfg: &GenConfig) -> Result<TabularDataset> {
    preprocess(&generate_raw(cfg)?, cfg.seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum InitStrategy {
    /// Copies of real training rows.
    #[default]
    Real,
    /// Draws from per-class diagonal Gaussians fitted on the train split.
    Random,
}

fn sample_class_rows(split: &Split, class: u8, ipc: usize, rng: &mut rng::DetRng) -> Result<Vec<usize>> {
    let members = split.class_indices(class);
    if members.len() < ipc {
        return Err(Error::InsufficientClassMembers {
            class,
            available: members.len(),
            requested: ipc,
        });
    }
    let mut picked: Vec<usize> = rng::sample_without_replacement(rng, members.len(), ipc)
        .into_iter()
        .map(|i| members[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// `ipc` real train rows per class (negatives first), uniformly without replacement.
pub fn sample_real_rows(dataset: &TabularDataset, ipc: usize, seed: u64) -> Result<SyntheticDataset> {
    let mut rng = rng::derive(seed, 0xc0);
    let mut rows = sample_class_rows(&dataset.train, 0, ipc, &mut rng)?;
    rows.extend(sample_class_rows(&dataset.train, 1, ipc, &mut rng)?);
    let labels = rows.iter().map(|&i| dataset.train.labels[i]).collect();
    SyntheticDataset::new(dataset.train.inputs.select_rows(&rows), labels, DEFAULT_STUDENT_LR)
}

/// Builds the initial synthetic set for condensation.
pub fn init_synthetic(
    dataset: &TabularDataset,
    ipc: usize,
    strategy: InitStrategy,
    seed: u64,
) -> Result<SyntheticDataset> {
    if ipc == 0 {
        return Err(Error::InvalidArgument("ipc must be positive".into()));
    }
    match strategy {
        InitStrategy::Real => sample_real_rows(dataset, ipc, seed),
        InitStrategy::Random => {
            let d = dataset.feature_dim();
            let mut rng = rng::derive(seed, 0xc1);
            let mut data = Vec::with_capacity(2 * ipc * d);
            let mut labels = Vec::with_capacity(2 * ipc);
            for class in [0u8, 1u8] {
                let members = dataset.train.class_indices(class);
                if members.is_empty() {
                    return Err(Error::InsufficientClassMembers {
                        class,
                        available: 0,
                        requested: ipc,
                    });
                }
                let moments: Vec<(f64, f64)> = (0..d)
                    .map(|j| {
                        let col: Vec<f64> = members.iter().map(|&i| dataset.train.inputs.get(i, j)).collect();
                        (vector::mean(&col), vector::std_dev(&col))
                    })
                    .collect();
                for _ in 0..ipc {
                    for &(m, s) in &moments {
                        data.push(m + s * rng::standard_normal(&mut rng));
                    }
                    labels.push(f64::from(class));
                }
            }
            SyntheticDataset::new(Matrix::from_vec(2 * ipc, d, data)?, labels, DEFAULT_STUDENT_LR)
        }
    }
}

/// Undersamples the majority class of the train split to the minority count.
/// Validation and test splits are left untouched.
pub fn balance_train_split(dataset: &TabularDataset, seed: u64) -> Result<TabularDataset> {
    let neg = dataset.train.class_indices(0);
    let pos = dataset.train.class_indices(1);
    if neg.is_empty() || pos.is_empty() {
        return Err(Error::SingleClass);
    }
    if neg.len() == pos.len() {
        return Ok(dataset.clone());
    }
    let mut rng = rng::derive(seed, 0xba1);
    let (minority, majority) = if pos.len() < neg.len() { (pos, neg) } else { (neg, pos) };
    let mut keep: Vec<usize> = rng::sample_without_replacement(&mut rng, majority.len(), minority.len())
        .into_iter()
        .map(|i| majority[i])
        .chain(minority)
        .collect();
    keep.sort_unstable();
    let mut out = dataset.clone();
    out.train = dataset.train.subset(&keep);
    out.refresh_prevalence();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_raw(n_pos: usize, n_neg: usize) -> RawTable {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..(n_pos + n_neg) {
            rows.push(vec![Some(i as f64), Some(1.0), Some((i % 7) as f64 * 0.5)]);
            labels.push(u8::from(i < n_pos));
        }
        RawTable::new(vec!["a".into(), "b".into(), "c".into()], rows, labels).unwrap()
    }

    #[test]
    fn raw_table_rejects_non_binary_labels() {
        let err = RawTable::new(vec!["x".into()], vec![vec![Some(1.0)]], vec![2]).unwrap_err();
        assert!(matches!(err, Error::Table(_)));
    }

    #[test]
    fn median_imputation_uses_train_rows_only() {
        let train: Vec<Vec<Option<f64>>> = vec![vec![Some(1.0)], vec![Some(2.0)], vec![Some(100.0)]];
        let refs: Vec<&[Option<f64>]> = train.iter().map(Vec::as_slice).collect();
        let pre = Preprocessor::fit(&refs, 1);
        assert_eq!(pre.impute(&[None]), vec![2.0]);
        assert_eq!(pre.impute(&[Some(5.0)]), vec![5.0]);
    }

    #[test]
    fn split_sizes_and_stratification() {
        let raw = small_raw(50, 950);
        let ds = preprocess(&raw, 3).unwrap();
        assert_eq!(ds.train.len(), 700);
        assert_eq!(ds.val.len(), 150);
        assert_eq!(ds.test.len(), 150);
        assert_eq!(ds.train.positives(), 35);
        assert!((ds.val.positives() as i64 - 8).abs() <= 1);
        // constant column b is centred but not scaled
        assert!(ds.train.inputs.iter_rows().all(|r| r[1] == 0.0));
    }

    #[test]
    fn splits_are_disjoint_and_cover() {
        let ds = preprocess(&small_raw(40, 160), 9).unwrap();
        let mut all: Vec<usize> = ds
            .train
            .rows
            .iter()
            .chain(&ds.val.rows)
            .chain(&ds.test.rows)
            .copied()
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 200);
    }

    #[test]
    fn class_too_small() {
        assert!(matches!(
            preprocess(&small_raw(5, 100), 0),
            Err(Error::InsufficientClassMembers { class: 1, .. })
        ));
    }

    #[test]
    fn balancing() {
        let ds = preprocess(&small_raw(100, 900), 1).unwrap();
        let b = balance_train_split(&ds, 4).unwrap();
        assert_eq!(b.train.positives(), 70);
        assert_eq!(b.train.len(), 140);
        assert_eq!(b.val, ds.val);
        assert_eq!(b.prevalence.val, ds.prevalence.val);
        let again = balance_train_split(&b, 5).unwrap();
        assert_eq!(again, b);
    }

    #[test]
    fn generator_counts_and_determinism() {
        let cfg = GenConfig {
            seed: 17,
            ..GenConfig::default()
        };
        let raw = generate_raw(&cfg).unwrap();
        assert_eq!(raw.labels.iter().filter(|&&y| y == 1).count(), 500);
        assert_eq!(raw, generate_raw(&cfg).unwrap());
        let missing = raw.missing_count() as f64 / (10_000.0 * 20.0);
        assert!((missing - 0.02).abs() < 0.003);
    }
}
