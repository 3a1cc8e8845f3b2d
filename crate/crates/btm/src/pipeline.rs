//! The pipeline commands. Each reads its inputs from the output directory,
//! writes its artifacts atomically and records them in a run manifest.
//! Independent units (experts, surrogates, evaluation seeds, theory pairs)
//! run on a local thread pool and are collected in input order, so the
//! outputs do not depend on the worker count.

use std::path::{Path, PathBuf};

use btm_core::bezier::{optimize_control_point, BezierPath, ControlOptConfig, OptTrace};
use btm_core::condense::{condense_run, CondenseOutcome, Supervision, SyntheticDataset};
use btm_core::cost;
use btm_core::data::{self, balance_train_split, generate_raw, preprocess, TabularDataset};
use btm_core::eval::{evaluate_seed, random_coreset, EvalConfig, MetricSummary};
use btm_core::objective::DatasetObjective;
use btm_core::theory::{theorem_report, TheoremReport};
use btm_core::trajectory::{train_expert, SgdConfig, Trajectory};
use btm_core::{Matrix, MlpSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomic::{read_json, write_atomic, write_json};
use crate::config::{Config, Method};
use crate::error::{BtmError, Result};
use crate::format;
use crate::manifest::ManifestBuilder;
use crate::tables::{self, ResultRow};

/// Runs `f` on a pool of `jobs` workers (`0` = one per core).
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| BtmError::Config(format!("--jobs: {e}")))?;
    Ok(pool.install(f))
}

pub fn expert_name(index: usize) -> String {
    format!("expert_{index:04}")
}

pub fn surrogate_name(index: usize) -> String {
    format!("surrogate_{index:04}")
}

pub fn experts_dir(cfg: &Config) -> PathBuf {
    cfg.output_dir.join("experts")
}

pub fn surrogates_dir(cfg: &Config) -> PathBuf {
    cfg.output_dir.join("surrogates")
}

pub fn condense_dir(cfg: &Config) -> PathBuf {
    cfg.output_dir.join("condense")
}

pub fn results_path(cfg: &Config) -> PathBuf {
    cfg.output_dir.join("results.csv")
}

pub fn synthetic_stem(method: Method, ipc: usize) -> String {
    format!("{}_ipc{ipc}", method.name())
}

fn with_extension(dir: &Path, stem: &str, ext: &str) -> PathBuf {
    dir.join(format!("{stem}.{ext}"))
}

fn core<T>(r: btm_core::Result<T>, context: impl FnOnce() -> String) -> Result<T> {
    r.map_err(|e| BtmError::from(e).context(context()))
}

// ---------------------------------------------------------------- data

/// Sidecar of the raw data table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub rows: usize,
    pub features: usize,
    pub missing_cells: usize,
    pub gen: data::GenConfig,
    pub split_seed: u64,
    pub split_sizes: [usize; 3],
    pub prevalence: data::Prevalence,
    pub normalization: Vec<data::FeatureStats>,
}

/// `gen-data`: draws the synthetic clinical table and writes it as CSV.
pub fn gen_data(cfg: &Config) -> Result<PathBuf> {
    let mut manifest = ManifestBuilder::start("gen-data");
    let raw = core(generate_raw(&cfg.data.gen), || "generating data".into())?;
    let ds = core(preprocess(&raw, cfg.data.split_seed), || "preprocessing data".into())?;
    let path = cfg.output_dir.join("data.csv");
    tables::write_raw_csv(&path, &raw, &cfg.data.label_column)?;
    let sidecar = DatasetManifest {
        rows: raw.len(),
        features: raw.feature_names.len(),
        missing_cells: raw.missing_count(),
        gen: cfg.data.gen.clone(),
        split_seed: cfg.data.split_seed,
        split_sizes: [ds.train.len(), ds.val.len(), ds.test.len()],
        prevalence: ds.prevalence,
        normalization: ds.normalization_stats.clone(),
    };
    let json = cfg.output_dir.join("data.json");
    write_json(&json, &sidecar)?;
    manifest.artifact(&path);
    manifest.artifact(&json);
    manifest.finish(cfg)?;
    Ok(path)
}

/// Loads the configured table and splits, imputes and normalises it.
pub fn load_dataset(cfg: &Config) -> Result<TabularDataset> {
    let path = cfg.data_path();
    let raw = tables::load_csv(&path, &cfg.data.label_column)?;
    let ds = core(preprocess(&raw, cfg.data.split_seed), || format!("preprocessing {}", path.display()))?;
    if cfg.data.balance_train {
        return core(balance_train_split(&ds, cfg.data.balance_seed), || "balancing train split".into());
    }
    Ok(ds)
}

// ---------------------------------------------------------------- experts

/// Sidecar of an expert trajectory container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub id: String,
    pub seed: u64,
    pub spec: MlpSpec,
    pub config: SgdConfig,
    pub endpoint_grad_norm: f64,
    pub checkpoints: usize,
    pub accepted: bool,
}

/// Names of the artifacts a stage produced successfully, in order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageIndex {
    pub ids: Vec<String>,
    /// Units that failed, with the reason.
    pub failed: Vec<(String, String)>,
}

fn read_index(dir: &Path) -> Result<StageIndex> {
    read_json(&dir.join("index.json"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertsReport {
    pub written: Vec<PathBuf>,
    pub failed: Vec<(String, String)>,
}

/// `train-experts`: one trajectory per configured seed. A diverged expert is
/// reported and skipped; the run only fails when every expert diverges.
pub fn train_experts(cfg: &Config, jobs: usize) -> Result<ExpertsReport> {
    let mut manifest = ManifestBuilder::start("train-experts");
    let ds = load_dataset(cfg)?;
    let base = cfg.model_spec(ds.feature_dim())?;
    let seeds = cfg.experts.seed_list();
    let runs: Vec<(u64, btm_core::Result<Trajectory>)> = with_pool(jobs, || {
        seeds
            .par_iter()
            .map(|&seed| {
                let spec = MlpSpec { seed, ..base.clone() };
                let sgd = SgdConfig {
                    seed,
                    ..cfg.experts.sgd.clone()
                };
                (seed, train_expert(&ds, &spec, &sgd))
            })
            .collect()
    })?;

    let dir = experts_dir(cfg);
    let mut index = StageIndex::default();
    let mut written = Vec::new();
    for (i, (seed, run)) in runs.into_iter().enumerate() {
        let id = expert_name(i);
        let traj = match run {
            Ok(t) => t,
            Err(e) => {
                manifest.note(format!("{id} (seed {seed}) failed: {e}"));
                index.failed.push((id, e.to_string()));
                continue;
            }
        };
        let bin = with_extension(&dir, &id, "btmt");
        format::write_trajectory(&bin, &traj.checkpoints, &traj.train_losses)?;
        let meta = TrajectoryMeta {
            id: id.clone(),
            seed,
            spec: traj.spec.clone(),
            config: traj.config.clone(),
            endpoint_grad_norm: traj.endpoint_grad_norm,
            checkpoints: traj.checkpoints.len(),
            accepted: traj.is_accepted(),
        };
        let side = with_extension(&dir, &id, "json");
        write_json(&side, &meta)?;
        manifest.artifact(&bin);
        manifest.artifact(&side);
        written.push(bin);
        index.ids.push(id);
    }
    let index_path = dir.join("index.json");
    write_json(&index_path, &index)?;
    manifest.artifact(&index_path);
    if written.is_empty() {
        return Err(BtmError::from(btm_core::Error::InvalidArgument(format!(
            "all {} experts failed",
            seeds.len()
        ))));
    }
    manifest.finish(cfg)?;
    Ok(ExpertsReport {
        written,
        failed: index.failed,
    })
}

/// Reads a trajectory container and its sidecar.
pub fn read_expert(bin: &Path) -> Result<(TrajectoryMeta, Trajectory)> {
    let meta: TrajectoryMeta = read_json(&bin.with_extension("json"))?;
    let payload = format::read_trajectory(bin)?;
    if payload.param_count() != meta.spec.param_count() || payload.checkpoints.len() != meta.checkpoints {
        return Err(BtmError::format(bin, "container does not match its sidecar"));
    }
    let traj = Trajectory {
        spec: meta.spec.clone(),
        config: meta.config.clone(),
        checkpoints: payload.checkpoints,
        train_losses: payload.train_losses,
        endpoint_grad_norm: meta.endpoint_grad_norm,
    };
    Ok((meta, traj))
}

pub fn expert_paths(cfg: &Config) -> Result<Vec<PathBuf>> {
    let dir = experts_dir(cfg);
    let index = read_index(&dir)?;
    Ok(index.ids.iter().map(|id| with_extension(&dir, id, "btmt")).collect())
}

pub fn load_experts(cfg: &Config) -> Result<Vec<(TrajectoryMeta, Trajectory)>> {
    expert_paths(cfg)?.iter().map(|p| read_expert(p)).collect()
}

// ---------------------------------------------------------------- surrogates

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateMeta {
    pub id: String,
    pub source: String,
    pub fit: ControlOptConfig,
    pub converged: bool,
    pub iterations: usize,
    pub kappa: f64,
}

/// Fits the control point of one expert on the train split.
pub fn fit_surrogate(
    traj: &Trajectory,
    ds: &TabularDataset,
    spec: &MlpSpec,
    fit: &ControlOptConfig,
) -> btm_core::Result<(BezierPath, OptTrace)> {
    let mut objective = DatasetObjective::new(spec, &ds.train.inputs, &ds.train.labels)?;
    if !fit.full_batch {
        objective = objective.with_minibatch(fit.batch_size);
    }
    optimize_control_point(traj.start(), traj.end(), &objective, fit)
}

/// `fit-bezier`: one surrogate per stored expert.
pub fn fit_bezier(cfg: &Config, jobs: usize) -> Result<Vec<PathBuf>> {
    let mut manifest = ManifestBuilder::start("fit-bezier");
    let ds = load_dataset(cfg)?;
    let spec = cfg.model_spec(ds.feature_dim())?;
    let experts = load_experts(cfg)?;
    if experts.is_empty() {
        return Err(BtmError::MissingInput(experts_dir(cfg)));
    }
    let fits: Vec<Result<(BezierPath, OptTrace, ControlOptConfig)>> = with_pool(jobs, || {
        experts
            .par_iter()
            .map(|(meta, traj)| {
                let fit = ControlOptConfig {
                    seed: cfg.bezier.seed.wrapping_add(meta.seed),
                    ..cfg.bezier.clone()
                };
                let (path, trace) = core(fit_surrogate(traj, &ds, &spec, &fit), || format!("fitting {}", meta.id))?;
                Ok((path, trace, fit))
            })
            .collect()
    })?;

    let dir = surrogates_dir(cfg);
    let mut index = StageIndex::default();
    let mut written = Vec::new();
    for (i, ((meta, _), fitted)) in experts.iter().zip(fits).enumerate() {
        let (path, trace, fit) = fitted?;
        let id = surrogate_name(i);
        let bin = with_extension(&dir, &id, "btmb");
        format::write_surrogate(&bin, &path)?;
        let side = with_extension(&dir, &id, "json");
        write_json(
            &side,
            &SurrogateMeta {
                id: id.clone(),
                source: meta.id.clone(),
                fit,
                converged: trace.converged,
                iterations: trace.steps.len(),
                kappa: btm_core::bezier::path_curvature(&path),
            },
        )?;
        let trace_path = dir.join(format!("{id}_trace.csv"));
        tables::write_trace_csv(&trace_path, &trace)?;
        for p in [&bin, &side, &trace_path] {
            manifest.artifact(p);
        }
        written.push(bin);
        index.ids.push(id);
    }
    let index_path = dir.join("index.json");
    write_json(&index_path, &index)?;
    manifest.artifact(&index_path);
    manifest.finish(cfg)?;
    Ok(written)
}

pub fn surrogate_paths(cfg: &Config) -> Result<Vec<PathBuf>> {
    let dir = surrogates_dir(cfg);
    let index = read_index(&dir)?;
    Ok(index.ids.iter().map(|id| with_extension(&dir, id, "btmb")).collect())
}

pub fn read_surrogate(bin: &Path) -> Result<(SurrogateMeta, BezierPath)> {
    let meta = read_json(&bin.with_extension("json"))?;
    Ok((meta, format::read_surrogate(bin)?))
}

pub fn load_surrogates(cfg: &Config) -> Result<Vec<(SurrogateMeta, BezierPath)>> {
    surrogate_paths(cfg)?.iter().map(|p| read_surrogate(p)).collect()
}

// ---------------------------------------------------------------- condense

/// Sidecar of a synthetic set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMeta {
    pub method: Method,
    pub ipc: usize,
    pub eta_s: f64,
    pub config_hash: String,
    pub best_iteration: usize,
    pub best_val_auprc: Option<f64>,
    pub best_val_auroc: Option<f64>,
    pub iterations: usize,
}

pub fn synthetic_path(cfg: &Config) -> PathBuf {
    with_extension(&condense_dir(cfg), &synthetic_stem(cfg.synthetic.method, cfg.synthetic.ipc), "csv")
}

/// Runs condensation with the configured method on a loaded dataset.
pub fn condense_with(cfg: &Config, ds: &TabularDataset) -> Result<CondenseOutcome> {
    let spec = cfg.model_spec(ds.feature_dim())?;
    let ipc = cfg.synthetic.ipc;
    let synth0 = core(
        data::init_synthetic(ds, ipc, cfg.synthetic.init, cfg.synthetic.init_seed),
        || "initialising synthetic set".into(),
    )?;
    match cfg.synthetic.method {
        Method::Random => {
            let coreset = core(random_coreset(ds, ipc, cfg.synthetic.init_seed), || "sampling coreset".into())?;
            Ok(CondenseOutcome {
                best: coreset.clone(),
                best_iteration: 0,
                final_synth: coreset,
                history: Vec::new(),
            })
        }
        Method::Btm => {
            let paths: Vec<BezierPath> = load_surrogates(cfg)?.into_iter().map(|(_, p)| p).collect();
            core(
                condense_run(Supervision::Bezier(&paths), ds, &spec, &synth0, &cfg.condense),
                || "condensing with surrogates".into(),
            )
        }
        Method::Mtt => {
            let trajs: Vec<Trajectory> = load_experts(cfg)?.into_iter().map(|(_, t)| t).collect();
            core(
                condense_run(Supervision::Mtt(&trajs), ds, &spec, &synth0, &cfg.condense),
                || "condensing with expert checkpoints".into(),
            )
        }
    }
}

/// `condense`: writes the best synthetic set, its sidecar and the history.
pub fn condense(cfg: &Config) -> Result<PathBuf> {
    let stem = synthetic_stem(cfg.synthetic.method, cfg.synthetic.ipc);
    let mut manifest = ManifestBuilder::start_named("condense", &format!("condense_{stem}"));
    let ds = load_dataset(cfg)?;
    let outcome = condense_with(cfg, &ds)?;
    let dir = condense_dir(cfg);
    let csv = with_extension(&dir, &stem, "csv");
    tables::write_synthetic_csv(&csv, &outcome.best, &ds.feature_names)?;
    let best_row = outcome.history.iter().find(|r| r.iteration == outcome.best_iteration);
    let meta = SyntheticMeta {
        method: cfg.synthetic.method,
        ipc: cfg.synthetic.ipc,
        eta_s: outcome.best.eta_s,
        config_hash: cfg.hash(),
        best_iteration: outcome.best_iteration,
        best_val_auprc: best_row.and_then(|r| r.val_auprc),
        best_val_auroc: best_row.and_then(|r| r.val_auroc),
        iterations: outcome.history.last().map_or(0, |r| r.iteration),
    };
    let side = with_extension(&dir, &stem, "json");
    write_json(&side, &meta)?;
    manifest.artifact(&csv);
    manifest.artifact(&side);
    if cfg.synthetic.method != Method::Random {
        let hist = dir.join(format!("{stem}_history.csv"));
        tables::write_history_csv(&hist, &outcome.history)?;
        manifest.artifact(&hist);
    }
    manifest.finish(cfg)?;
    Ok(csv)
}

pub fn read_synthetic(csv: &Path) -> Result<(SyntheticMeta, SyntheticDataset)> {
    let meta: SyntheticMeta = read_json(&csv.with_extension("json"))?;
    let synth = tables::read_synthetic_csv(csv, meta.eta_s)?;
    Ok((meta, synth))
}

// ---------------------------------------------------------------- evaluate

/// Trains `eval.n_seeds` fresh networks on `(inputs, labels)` in parallel and
/// scores them on the test split.
pub fn evaluate_set(
    inputs: &Matrix,
    labels: &[f64],
    spec: &MlpSpec,
    ds: &TabularDataset,
    eval: &EvalConfig,
    jobs: usize,
) -> Result<MetricSummary> {
    core(eval.validate(), || "eval".into())?;
    let seeds: Vec<u64> = eval.seeds().collect();
    let outcomes = with_pool(jobs, || {
        seeds
            .par_iter()
            .map(|&s| (s, evaluate_seed(inputs, labels, spec, &ds.test, eval, s)))
            .collect()
    })?;
    core(MetricSummary::from_outcomes(outcomes), || "evaluation".into())
}

/// What `evaluate` scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalTarget {
    /// The synthetic set of the configured method and ipc.
    Synthetic,
    /// The whole training split (the upper bound).
    Full,
}

/// `evaluate`: scores the target and upserts its row in `results.csv`.
pub fn evaluate(cfg: &Config, target: EvalTarget, jobs: usize) -> Result<(ResultRow, MetricSummary)> {
    let stem = match target {
        EvalTarget::Full => "evaluate_full".to_string(),
        EvalTarget::Synthetic => format!("evaluate_{}", synthetic_stem(cfg.synthetic.method, cfg.synthetic.ipc)),
    };
    let mut manifest = ManifestBuilder::start_named("evaluate", &stem);
    let ds = load_dataset(cfg)?;
    let spec = cfg.model_spec(ds.feature_dim())?;
    let (summary, row) = match target {
        EvalTarget::Full => {
            let s = evaluate_set(&ds.train.inputs, &ds.train.labels, &spec, &ds, &cfg.eval, jobs)?;
            let row = ResultRow::new("full", None, &s);
            (s, row)
        }
        EvalTarget::Synthetic => {
            let (meta, synth) = read_synthetic(&synthetic_path(cfg))?;
            let s = evaluate_set(&synth.inputs, &synth.labels, &spec, &ds, &cfg.eval, jobs)?;
            let row = ResultRow::new(meta.method.name(), Some(meta.ipc), &s);
            (s, row)
        }
    };
    for seed in &summary.failed_seeds {
        manifest.note(format!("evaluation seed {seed} diverged"));
    }
    let path = results_path(cfg);
    tables::upsert_result(&path, row.clone())?;
    manifest.artifact(&path);
    manifest.finish(cfg)?;
    Ok((row, summary))
}

// ---------------------------------------------------------------- storage

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageEntry {
    pub trajectory: PathBuf,
    pub surrogate: Option<PathBuf>,
    pub param_count: usize,
    pub checkpoints: usize,
    pub trajectory_payload_bytes: u64,
    pub surrogate_payload_bytes: u64,
    pub trajectory_file_bytes: u64,
    pub surrogate_file_bytes: Option<u64>,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageReport {
    pub entries: Vec<StorageEntry>,
    pub total_trajectory_bytes: u64,
    pub total_surrogate_bytes: u64,
    pub mean_ratio: f64,
    pub fit_max_iters: usize,
    pub fit_mc_samples: usize,
    pub fit_batch: usize,
    pub train_size: usize,
    /// Control-point fitting cost per trajectory in training epochs.
    pub equivalent_epochs: f64,
}

impl StorageReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("trajectory\tcheckpoints\tparams\tsgd_bytes\tbezier_bytes\tratio\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{:.2}\n",
                e.trajectory.display(),
                e.checkpoints,
                e.param_count,
                e.trajectory_payload_bytes,
                e.surrogate_payload_bytes,
                e.ratio
            ));
        }
        s.push_str(&format!(
            "total: {} bytes of checkpoints vs {} bytes of surrogates (mean ratio {:.2}x)\n",
            self.total_trajectory_bytes, self.total_surrogate_bytes, self.mean_ratio
        ));
        s.push_str(&format!(
            "control-point fit: {} iterations x {} samples x batch {} over {} train rows = {:.4} equivalent epochs\n",
            self.fit_max_iters, self.fit_mc_samples, self.fit_batch, self.train_size, self.equivalent_epochs
        ));
        s
    }
}

/// Storage accounting for explicit files; surrogates pair with trajectories by position.
pub fn storage_report(
    trajectories: &[PathBuf],
    surrogates: &[PathBuf],
    fit: &ControlOptConfig,
    train_size: usize,
) -> Result<StorageReport> {
    let mut entries = Vec::with_capacity(trajectories.len());
    for (i, t) in trajectories.iter().enumerate() {
        let payload = format::read_trajectory(t)?;
        let n = payload.param_count();
        let k = payload.checkpoints.len();
        let (surrogate, surrogate_file_bytes) = match surrogates.get(i) {
            Some(s) => {
                let path = format::read_surrogate(s)?;
                if path.param_count() != n {
                    return Err(BtmError::format(s, format!("has {} parameters, {} expected", path.param_count(), n)));
                }
                let bytes = std::fs::metadata(s).map_err(|e| BtmError::io(s, e))?.len();
                (Some(s.clone()), Some(bytes))
            }
            None => (None, None),
        };
        entries.push(StorageEntry {
            trajectory: t.clone(),
            surrogate,
            param_count: n,
            checkpoints: k,
            trajectory_payload_bytes: cost::payload_bytes(k, n, 4),
            surrogate_payload_bytes: cost::payload_bytes(cost::SURROGATE_POINTS, n, 4),
            trajectory_file_bytes: std::fs::metadata(t).map_err(|e| BtmError::io(t, e))?.len(),
            surrogate_file_bytes,
            ratio: cost::storage_ratio(k),
        });
    }
    let batch = if fit.full_batch { train_size } else { fit.batch_size.min(train_size) };
    let equivalent_epochs = core(
        cost::equivalent_epochs(fit.max_iters, fit.mc_samples, batch, train_size),
        || "fit cost".into(),
    )?;
    let mean_ratio = if entries.is_empty() {
        0.0
    } else {
        entries.iter().map(|e| e.ratio).sum::<f64>() / entries.len() as f64
    };
    Ok(StorageReport {
        total_trajectory_bytes: entries.iter().map(|e| e.trajectory_payload_bytes).sum(),
        total_surrogate_bytes: entries.iter().map(|e| e.surrogate_payload_bytes).sum(),
        mean_ratio,
        entries,
        fit_max_iters: fit.max_iters,
        fit_mc_samples: fit.mc_samples,
        fit_batch: batch,
        train_size,
        equivalent_epochs,
    })
}

/// `report-storage`: defaults to every stored expert and surrogate.
pub fn report_storage(cfg: &Config, trajectories: &[PathBuf], surrogates: &[PathBuf]) -> Result<StorageReport> {
    let mut manifest = ManifestBuilder::start("report-storage");
    let trajectories = if trajectories.is_empty() { expert_paths(cfg)? } else { trajectories.to_vec() };
    let surrogates = if surrogates.is_empty() && surrogates_dir(cfg).join("index.json").exists() {
        surrogate_paths(cfg)?
    } else {
        surrogates.to_vec()
    };
    let train_size = load_dataset(cfg)?.train.len();
    let report = storage_report(&trajectories, &surrogates, &cfg.bezier, train_size)?;
    let dir = cfg.output_dir.join("storage");
    let json = dir.join("report.json");
    let text = dir.join("report.txt");
    write_json(&json, &report)?;
    write_atomic(&text, report.to_text().as_bytes())?;
    manifest.artifact(&json);
    manifest.artifact(&text);
    manifest.finish(cfg)?;
    Ok(report)
}

// ---------------------------------------------------------------- theory

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub trajectory: String,
    pub surrogate: String,
    pub report: TheoremReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheorySummary {
    pub pairs: usize,
    pub bound_holds: usize,
    pub sgd_exceeds_kappa: usize,
    pub mean_kappa: f64,
    pub mean_beta_hat: f64,
    pub mean_pred_ratio: Option<f64>,
    pub max_pred_ratio: Option<f64>,
}

impl TheorySummary {
    pub fn from_reports(reports: &[PairReport]) -> Self {
        let n = reports.len().max(1) as f64;
        let ratios: Vec<f64> = reports.iter().filter_map(|r| r.report.pred_ratio).collect();
        Self {
            pairs: reports.len(),
            bound_holds: reports.iter().filter(|r| r.report.bound_holds).count(),
            sgd_exceeds_kappa: reports.iter().filter(|r| r.report.sgd_exceeds_kappa).count(),
            mean_kappa: reports.iter().map(|r| r.report.kappa).sum::<f64>() / n,
            mean_beta_hat: reports.iter().map(|r| r.report.beta_hat).sum::<f64>() / n,
            mean_pred_ratio: (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
            max_pred_ratio: ratios.iter().copied().reduce(f64::max),
        }
    }

    pub fn to_text(&self, reports: &[PairReport]) -> String {
        let mut s = String::new();
        s.push_str("pair\tkappa\tbeta_hat\tloss_bezier\tloss_sgd\tbound_rhs\tholds\tsgd_curv\tpred_ratio\n");
        for r in reports {
            let t = &r.report;
            s.push_str(&format!(
                "{}\t{:.4}\t{:.4}\t{:.6}\t{:.6}\t{:.6}\t{}\t{:.4}\t{}\n",
                r.surrogate,
                t.kappa,
                t.beta_hat,
                t.avg_loss_bezier,
                t.avg_loss_gamma,
                t.bound_rhs,
                t.bound_holds,
                t.sgd_max_rescaled,
                t.pred_ratio.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
            ));
        }
        s.push_str(&format!(
            "loss bound holds in {}/{} pairs; rescaled SGD curvature exceeds kappa in {}/{}\n",
            self.bound_holds, self.pairs, self.sgd_exceeds_kappa, self.pairs
        ));
        s
    }
}

/// `theory-report`: checks every stored surrogate against its source expert.
pub fn theory_report(cfg: &Config, jobs: usize) -> Result<(Vec<PairReport>, TheorySummary)> {
    let mut manifest = ManifestBuilder::start("theory-report");
    let ds = load_dataset(cfg)?;
    let spec = cfg.model_spec(ds.feature_dim())?;
    let surrogates = load_surrogates(cfg)?;
    let edir = experts_dir(cfg);
    let mut pairs = Vec::with_capacity(surrogates.len());
    for (meta, path) in surrogates {
        let bin = with_extension(&edir, &meta.source, "btmt");
        if !bin.exists() {
            return Err(BtmError::Config(format!(
                "surrogate {} has no matching trajectory ({} is missing)",
                meta.id,
                bin.display()
            )));
        }
        let (_, traj) = read_expert(&bin)?;
        pairs.push((meta, path, traj));
    }
    let reports: Vec<Result<PairReport>> = with_pool(jobs, || {
        pairs
            .par_iter()
            .enumerate()
            .map(|(i, (meta, path, traj))| {
                let tcfg = btm_core::theory::TheoryConfig {
                    seed: cfg.theory.seed.wrapping_add(i as u64),
                    ..cfg.theory.clone()
                };
                let report = core(theorem_report(traj, path, &ds, &spec, &tcfg), || {
                    format!("checking {} against {}", meta.id, meta.source)
                })?;
                Ok(PairReport {
                    trajectory: meta.source.clone(),
                    surrogate: meta.id.clone(),
                    report,
                })
            })
            .collect()
    })?;
    let reports: Vec<PairReport> = reports.into_iter().collect::<Result<_>>()?;
    let dir = cfg.output_dir.join("theory");
    for (i, r) in reports.iter().enumerate() {
        let p = dir.join(format!("report_{i:04}.json"));
        write_json(&p, r)?;
        manifest.artifact(&p);
    }
    let summary = TheorySummary::from_reports(&reports);
    let sj = dir.join("summary.json");
    let st = dir.join("summary.txt");
    write_json(&sj, &summary)?;
    write_atomic(&st, summary.to_text(&reports).as_bytes())?;
    manifest.artifact(&sj);
    manifest.artifact(&st);
    manifest.finish(cfg)?;
    Ok((reports, summary))
}
