//! Files, configuration and the experiment pipeline around [`btm_core`].
//!
//! Artifacts live under one output directory:
//!
//! ```text
//! data.csv, data.json                raw table and its summary
//! experts/expert_XXXX.btmt (+ .json) expert trajectories
//! surrogates/surrogate_XXXX.btmb     fitted surrogates (+ .json, _trace.csv)
//! condense/<method>_ipc<k>.csv       synthetic sets (+ .json, _history.csv)
//! results.csv                        evaluation table
//! storage/, theory/                  reports
//! manifests/*.json                   run manifests
//! ```

pub mod atomic;
pub mod config;
pub mod error;
pub mod format;
pub mod manifest;
pub mod pipeline;
pub mod tables;

pub use config::{Config, Method, Profile, Sources};
pub use error::{BtmError, Result};
