//! End-to-end runs of the `btm` binary on a tiny configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use btm::config::{Config, Profile};
use btm::format::{read_surrogate, read_trajectory};
use btm::tables::read_synthetic_csv;
use btm_core::data::{init_synthetic, InitStrategy};

const TINY: &str = r#"
[data.gen]
n_samples = 1200
[experts]
seeds = [1, 2]
[experts.sgd]
epochs = 8
[bezier]
max_iters = 15
[condense]
max_iters = 6
student_steps = 3
eval_every = 3
[condense.eval]
epochs = 3
n_seeds = 1
[eval]
epochs = 3
n_seeds = 2
[synthetic]
ipc = 20
[theory]
n_x = 32
"#;

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = root.join("run.toml");
        fs::write(&config, format!("output_dir = {:?}\n{TINY}", root.join("out").to_str().unwrap())).unwrap();
        Self {
            _dir: dir,
            root,
            config,
        }
    }

    fn out(&self) -> PathBuf {
        self.root.join("out")
    }

    fn btm(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_btm"))
            .args(args)
            .arg("--profile")
            .arg("desk")
            .arg("--config")
            .arg(&self.config)
            .arg("--jobs")
            .arg("1")
            .env_remove("BTM_PROFILE")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.btm(args);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn fails(&self, args: &[&str], code: i32) -> String {
        let out = self.btm(args);
        assert_eq!(out.status.code(), Some(code), "{args:?}");
        String::from_utf8(out.stderr).unwrap()
    }

    fn config(&self) -> Config {
        btm::Sources {
            profile: Profile::Desk,
            file: Some(self.config.clone()),
            ..Default::default()
        }
        .load()
        .unwrap()
    }
}

fn bytes(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn usage_errors_exit_with_two() {
    let ws = Workspace::new();
    assert_eq!(ws.btm(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(ws.btm(&["condense", "--method", "sideways"]).status.code(), Some(2));
    let err = ws.fails(&["show-config", "--set", "model.depth=3"], 2);
    assert!(err.contains("model") && err.contains("depth"), "{err}");
    let out = Command::new(env!("CARGO_BIN_EXE_btm"))
        .args(["show-config", "--config", "/nonexistent/run.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/run.toml"));
}

#[test]
fn missing_dataset_names_the_path() {
    let ws = Workspace::new();
    let err = ws.fails(&["train-experts"], 2);
    assert!(err.contains(ws.out().join("data.csv").to_str().unwrap()), "{err}");
}

#[test]
fn environment_overrides_config() {
    let ws = Workspace::new();
    let out = Command::new(env!("CARGO_BIN_EXE_btm"))
        .args(["show-config", "--config"])
        .arg(&ws.config)
        .env("BTM_CONDENSE__STUDENT_STEPS", "17")
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&out.stdout).contains("student_steps = 17"));
}

#[test]
fn full_pipeline() {
    let ws = Workspace::new();
    let out = ws.out();
    let cfg = ws.config();

    ws.ok(&["gen-data"]);
    assert!(out.join("data.json").exists());

    ws.ok(&["train-experts"]);
    let experts = out.join("experts");
    let e0 = bytes(&experts.join("expert_0000.btmt"));
    let e1 = bytes(&experts.join("expert_0001.btmt"));
    assert!(!experts.join("expert_0002.btmt").exists());
    ws.ok(&["train-experts"]);
    assert_eq!(bytes(&experts.join("expert_0000.btmt")), e0);
    assert_eq!(bytes(&experts.join("expert_0001.btmt")), e1);
    let meta: serde_json::Value = serde_json::from_slice(&bytes(&experts.join("expert_0001.json"))).unwrap();
    assert_eq!(meta["seed"], 2);

    ws.ok(&["fit-bezier"]);
    for i in 0..2 {
        let traj = read_trajectory(&experts.join(format!("expert_{i:04}.btmt"))).unwrap();
        let path = read_surrogate(&out.join(format!("surrogates/surrogate_{i:04}.btmb"))).unwrap();
        assert_eq!(path.param_count(), traj.param_count());
        assert_eq!(&path.theta0, &traj.checkpoints[0]);
        assert_eq!(&path.theta_t, traj.checkpoints.last().unwrap());
        let trace = fs::read_to_string(out.join(format!("surrogates/surrogate_{i:04}_trace.csv"))).unwrap();
        assert!(trace.lines().count() - 1 <= cfg.bezier.max_iters);
    }

    ws.ok(&["condense", "--method", "random"]);
    assert!(out.join("condense/random_ipc20.csv").exists());
    assert!(!out.join("condense/random_ipc20_history.csv").exists());

    ws.ok(&["condense", "--set", "condense.max_iters=0"]);
    let ds = btm::pipeline::load_dataset(&cfg).unwrap();
    let init = init_synthetic(&ds, 20, InitStrategy::Real, 0).unwrap();
    let written = read_synthetic_csv(&out.join("condense/btm_ipc20.csv"), init.eta_s).unwrap();
    assert_eq!(written, init);

    ws.ok(&["condense"]);
    ws.ok(&["condense", "--method", "mtt"]);
    let history = fs::read_to_string(out.join("condense/mtt_ipc20_history.csv")).unwrap();
    assert!(history.starts_with("iteration,l_btm,eta_s,val_auroc,val_auprc\n"));
    assert_eq!(history.lines().count(), 1 + 1 + 6);

    let line = ws.ok(&["evaluate"]);
    assert!(line.starts_with("btm ipc=20"));
    let results = out.join("results.csv");
    let first = bytes(&results);
    ws.ok(&["evaluate"]);
    assert_eq!(bytes(&results), first);
    ws.ok(&["evaluate", "--full"]);
    ws.ok(&["evaluate", "--method", "random"]);
    let text = fs::read_to_string(&results).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.contains("\nfull,all,"));
    ws.fails(&["evaluate", "--ipc", "7"], 2);

    let report = ws.ok(&["report-storage"]);
    assert!(report.contains("ratio"));
    let storage: serde_json::Value = serde_json::from_slice(&bytes(&out.join("storage/report.json"))).unwrap();
    assert_eq!(storage["entries"][0]["checkpoints"], 9);

    ws.ok(&["theory-report"]);
    assert!(out.join("theory/report_0000.json").exists());
    assert!(out.join("theory/report_0001.json").exists());
    assert!(out.join("theory/summary.txt").exists());

    let manifest: serde_json::Value = serde_json::from_slice(&bytes(&out.join("manifests/fit-bezier.json"))).unwrap();
    assert_eq!(manifest["config_hash"], cfg.hash());
    for a in manifest["artifacts"].as_array().unwrap() {
        assert!(Path::new(a["path"].as_str().unwrap()).exists());
    }

    // A surrogate whose expert has gone missing cannot be paired.
    fs::remove_file(experts.join("expert_0001.btmt")).unwrap();
    let err = ws.fails(&["theory-report"], 2);
    assert!(err.contains("expert_0001"), "{err}");
}
