use std::path::PathBuf;
use std::process::ExitCode;

use btm::config::{Method, Profile, Sources};
use btm::pipeline::{self, EvalTarget};
use btm::{BtmError, Config};
use clap::{Args, Parser, Subcommand};

/// Dataset condensation by matching Bezier surrogates of SGD trajectories.
#[derive(Debug, Parser)]
#[command(name = "btm", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file, layered over the profile.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Base set of defaults.
    #[arg(long, global = true, value_enum, default_value_t = Profile::Paper, env = "BTM_PROFILE")]
    profile: Profile,
    /// Override one key, e.g. `--set condense.max_iters=100`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long, short, global = true, default_value_t = 0, env = "BTM_JOBS")]
    jobs: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw the synthetic clinical table into <output_dir>/data.csv.
    GenData,
    /// Train expert trajectories.
    TrainExperts,
    /// Fit one Bezier surrogate per expert.
    FitBezier,
    /// Learn a synthetic set.
    Condense {
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(long)]
        ipc: Option<usize>,
    },
    /// Score a synthetic set (or the full train split) and update results.csv.
    Evaluate {
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(long)]
        ipc: Option<usize>,
        /// Evaluate the full training split instead.
        #[arg(long)]
        full: bool,
    },
    /// Compare checkpoint storage with surrogate storage.
    ReportStorage {
        /// Trajectory files; defaults to every stored expert.
        #[arg(long = "trajectory")]
        trajectories: Vec<PathBuf>,
        /// Surrogate files, paired with trajectories by position.
        #[arg(long = "surrogate")]
        surrogates: Vec<PathBuf>,
    },
    /// Check the surrogate guarantees numerically for every stored pair.
    TheoryReport,
    /// Print the resolved configuration as TOML.
    ShowConfig,
}

fn load(common: &Common, extra: Vec<String>) -> btm::Result<Config> {
    let mut sets = common.sets.clone();
    sets.extend(extra);
    Sources {
        profile: common.profile,
        file: common.config.clone(),
        sets,
        ..Sources::default()
    }
    .with_process_env()
    .load()
}

fn synthetic_sets(method: Option<Method>, ipc: Option<usize>) -> Vec<String> {
    let mut sets = Vec::new();
    if let Some(m) = method {
        sets.push(format!("synthetic.method=\"{}\"", m.name()));
    }
    if let Some(k) = ipc {
        sets.push(format!("synthetic.ipc={k}"));
    }
    sets
}

fn run(cli: Cli) -> btm::Result<()> {
    let jobs = cli.common.jobs;
    match cli.command {
        Command::GenData => {
            let cfg = load(&cli.common, Vec::new())?;
            let path = pipeline::gen_data(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::TrainExperts => {
            let cfg = load(&cli.common, Vec::new())?;
            let report = pipeline::train_experts(&cfg, jobs)?;
            for (id, why) in &report.failed {
                eprintln!("warning: {id} failed: {why}");
            }
            println!("wrote {} trajectories to {}", report.written.len(), pipeline::experts_dir(&cfg).display());
        }
        Command::FitBezier => {
            let cfg = load(&cli.common, Vec::new())?;
            let written = pipeline::fit_bezier(&cfg, jobs)?;
            println!("wrote {} surrogates to {}", written.len(), pipeline::surrogates_dir(&cfg).display());
        }
        Command::Condense { method, ipc } => {
            let cfg = load(&cli.common, synthetic_sets(method, ipc))?;
            let path = pipeline::condense(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::Evaluate { method, ipc, full } => {
            let cfg = load(&cli.common, synthetic_sets(method, ipc))?;
            let target = if full { EvalTarget::Full } else { EvalTarget::Synthetic };
            let (row, summary) = pipeline::evaluate(&cfg, target, jobs)?;
            if summary.has_failures() {
                eprintln!("warning: diverged evaluation seeds {:?}", summary.failed_seeds);
            }
            println!(
                "{} ipc={}: auroc {:.4} +/- {:.4}, auprc {:.4} +/- {:.4}",
                row.method, row.ipc, row.auroc_mean, row.auroc_std, row.auprc_mean, row.auprc_std
            );
        }
        Command::ReportStorage {
            trajectories,
            surrogates,
        } => {
            let cfg = load(&cli.common, Vec::new())?;
            let report = pipeline::report_storage(&cfg, &trajectories, &surrogates)?;
            print!("{}", report.to_text());
        }
        Command::TheoryReport => {
            let cfg = load(&cli.common, Vec::new())?;
            let (reports, summary) = pipeline::theory_report(&cfg, jobs)?;
            print!("{}", summary.to_text(&reports));
        }
        Command::ShowConfig => {
            let cfg = load(&cli.common, Vec::new())?;
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// The error and its chain of causes on one line.
fn render(e: &BtmError) -> String {
    let mut s = e.to_string();
    let mut source = std::error::Error::source(e);
    while let Some(inner) = source {
        let text = inner.to_string();
        if !s.contains(&text) {
            s.push_str(": ");
            s.push_str(&text);
        }
        source = inner.source();
    }
    s
}
