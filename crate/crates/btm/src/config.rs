//! Run configuration: a TOML file layered over a named profile, then
//! `BTM_SECTION__KEY` environment variables, then `--set section.key=value`
//! flags. Every layer is merged as a TOML tree before one typed decode, so a
//! bad key is reported with its full dotted path.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use btm_core::bezier::ControlOptConfig;
use btm_core::condense::CondenseConfig;
use btm_core::data::{GenConfig, InitStrategy};
use btm_core::eval::EvalConfig;
use btm_core::theory::TheoryConfig;
use btm_core::trajectory::SgdConfig;
use btm_core::MlpSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BtmError, Result};

pub const ENV_PREFIX: &str = "BTM_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Hyperparameters of the original experiments.
    #[default]
    Paper,
    /// A shortened pipeline that finishes in minutes on one core.
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Btm,
    Mtt,
    Random,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Btm => "btm",
            Method::Mtt => "mtt",
            Method::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Input table; defaults to `<output_dir>/data.csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub label_column: String,
    pub split_seed: u64,
    /// Undersample the majority class of the train split.
    pub balance_train: bool,
    pub balance_seed: u64,
    pub gen: GenConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertsSection {
    pub count: usize,
    pub first_seed: u64,
    /// Explicit seeds; overrides `count` and `first_seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    /// `sgd.seed` is replaced by each expert's own seed.
    pub sgd: SgdConfig,
}

impl ExpertsSection {
    pub fn seed_list(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.count as u64).map(|i| self.first_seed + i).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub method: Method,
    pub ipc: usize,
    pub init: InitStrategy,
    pub init_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub model: ModelSection,
    pub experts: ExpertsSection,
    pub bezier: ControlOptConfig,
    pub synthetic: SyntheticSection,
    pub condense: CondenseConfig,
    /// Final evaluation; validation scoring inside condensation uses `condense.eval`.
    pub eval: EvalConfig,
    pub theory: TheoryConfig,
}

impl Config {
    pub fn profile(profile: Profile) -> Self {
        let mut cfg = Config {
            output_dir: PathBuf::from("output"),
            data: DataSection {
                path: None,
                label_column: "label".into(),
                split_seed: 0,
                balance_train: false,
                balance_seed: 0,
                gen: GenConfig::default(),
            },
            model: ModelSection {
                hidden: vec![64],
                dropout: 0.25,
            },
            experts: ExpertsSection {
                count: 50,
                first_seed: 0,
                seeds: None,
                sgd: SgdConfig::default(),
            },
            bezier: ControlOptConfig::default(),
            synthetic: SyntheticSection {
                method: Method::Btm,
                ipc: 50,
                init: InitStrategy::Real,
                init_seed: 0,
            },
            condense: CondenseConfig {
                eval: EvalConfig {
                    seed: 1000,
                    ..CondenseConfig::default().eval
                },
                ..CondenseConfig::default()
            },
            eval: EvalConfig::default(),
            theory: TheoryConfig::default(),
        };
        if profile == Profile::Desk {
            cfg.experts.count = 10;
            cfg.experts.sgd.batch_size = DESK_EXPERT_BATCH;
            cfg.condense.max_iters = 2000;
        }
        cfg
    }

    pub fn data_path(&self) -> PathBuf {
        self.data.path.clone().unwrap_or_else(|| self.output_dir.join("data.csv"))
    }

    /// Network used everywhere except expert training, which re-seeds it.
    pub fn model_spec(&self, input_dim: usize) -> Result<MlpSpec> {
        let mut widths = Vec::with_capacity(self.model.hidden.len() + 2);
        widths.push(input_dim);
        widths.extend(&self.model.hidden);
        widths.push(1);
        MlpSpec::new(widths, self.model.dropout, 0).map_err(|e| BtmError::Config(format!("model: {e}")))
    }

    /// Checks every section against the core validators.
    pub fn validate(&self) -> Result<()> {
        let section = |name: &str, r: btm_core::Result<()>| r.map_err(|e| BtmError::Config(format!("{name}: {e}")));
        section("data.gen", self.data.gen.validate())?;
        section("experts.sgd", self.experts.sgd.validate())?;
        section("bezier", self.bezier.validate())?;
        section("condense", self.condense.validate())?;
        section("condense.eval", self.condense.eval.validate())?;
        section("eval", self.eval.validate())?;
        self.model_spec(self.data.gen.n_features)?;
        if self.experts.seed_list().is_empty() {
            return Err(BtmError::Config("experts: at least one expert is required".into()));
        }
        if self.synthetic.ipc == 0 {
            return Err(BtmError::Config("synthetic.ipc: must be positive".into()));
        }
        if self.data.label_column.is_empty() {
            return Err(BtmError::Config("data.label_column: must not be empty".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(&json))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }
}

/// Expert mini-batch of the desk profile. At 256 the desk train split gives
/// about 27 steps per epoch and the segments between surrogate points are too
/// short for the matching signal; 64 restores a step count per epoch in the
/// range of the original datasets.
pub const DESK_EXPERT_BATCH: usize = 64;

/// Where configuration values come from, lowest precedence first.
#[derive(Debug, Clone, Default)]
pub struct Sources {
    pub profile: Profile,
    pub file: Option<PathBuf>,
    pub env: Vec<(String, String)>,
    pub sets: Vec<String>,
}

impl Sources {
    /// Collects `BTM_*` variables from the process environment. `BTM_PROFILE`
    /// and `BTM_JOBS` are command-line options, not config keys.
    pub fn with_process_env(mut self) -> Self {
        self.env = std::env::vars()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k != "BTM_PROFILE" && k != "BTM_JOBS")
            .collect();
        self.env.sort();
        self
    }

    pub fn load(&self) -> Result<Config> {
        let mut tree = toml::Value::try_from(Config::profile(self.profile)).expect("config serialises");
        if let Some(path) = &self.file {
            let text = std::fs::read_to_string(path).map_err(|e| BtmError::io(path, e))?;
            let file: toml::Table = text
                .parse()
                .map_err(|e: toml::de::Error| BtmError::Config(format!("{}: {}", path.display(), e.message())))?;
            merge(&mut tree, toml::Value::Table(file));
        }
        for (key, value) in &self.env {
            let dotted = key[ENV_PREFIX.len()..].to_lowercase().replace("__", ".");
            set_path(&mut tree, &dotted, value).map_err(|e| BtmError::Config(format!("{key}: {e}")))?;
        }
        for assignment in &self.sets {
            let (key, value) = assignment
                .split_once('=')
                .ok_or_else(|| BtmError::Config(format!("--set `{assignment}`: expected section.key=value")))?;
            set_path(&mut tree, key.trim(), value.trim()).map_err(|e| BtmError::Config(format!("--set {key}: {e}")))?;
        }
        let cfg = decode(tree)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn decode(tree: toml::Value) -> Result<Config> {
    serde_path_to_error::deserialize(tree).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        BtmError::Config(format!("{path}: {}", inner.message()))
    })
}

/// Recursively overlays `top` onto `base`; tables merge, everything else replaces.
pub fn merge(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses `raw` as a TOML value, falling back to a bare string.
fn parse_scalar(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn set_path(tree: &mut toml::Value, dotted: &str, raw: &str) -> std::result::Result<(), String> {
    let parts: Vec<&str> = dotted.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("malformed key `{dotted}`"));
    }
    let mut node = tree;
    for part in &parts[..parts.len() - 1] {
        let table = node.as_table_mut().ok_or_else(|| format!("`{dotted}` does not name a table key"))?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = node.as_table_mut().ok_or_else(|| format!("`{dotted}` does not name a table key"))?;
    table.insert(parts[parts.len() - 1].to_string(), parse_scalar(raw));
    Ok(())
}

/// Seeds used by a run, recorded in manifests.
pub fn seed_summary(cfg: &Config) -> BTreeMap<&'static str, serde_json::Value> {
    let mut m = BTreeMap::new();
    m.insert("data.gen", cfg.data.gen.seed.into());
    m.insert("data.split", cfg.data.split_seed.into());
    m.insert("experts", cfg.experts.seed_list().into());
    m.insert("bezier", cfg.bezier.seed.into());
    m.insert("synthetic.init", cfg.synthetic.init_seed.into());
    m.insert("condense", cfg.condense.seed.into());
    m.insert("condense.eval", cfg.condense.eval.seed.into());
    m.insert("eval", cfg.eval.seed.into());
    m.insert("theory", cfg.theory.seed.into());
    m
}

pub fn write_config(path: &Path, cfg: &Config) -> Result<()> {
    crate::atomic::write_atomic(path, cfg.to_toml().as_bytes())
}
