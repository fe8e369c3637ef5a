//! `battdiag`: generate the synthetic benchmark, train one method, run the
//! evaluation report, fit or simulate a single curve.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use battdiag::datagen::{make_folds, Benchmark};
use battdiag::evaluation::{composition_line, job_seed, run_evaluation, AnalysisStatus};
use battdiag::exec::with_jobs;
use battdiag::halfcell::{
    feature_curve, fit_halfcell_auto, health_params, single_mode_icq, DegradationMode, FitOptions, FullCellCurve,
};
use battdiag::piml::{train_method, Method, SharedModels, TrainingData};
use battdiag::Execution;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::{config_keys, RunConfig, SEED_ENV};

#[derive(Parser)]
#[command(name = "battdiag", version, about = "Battery degradation diagnostics from dQ/dV curves")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML run config; built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides the config seeds.
    #[arg(long, env = SEED_ENV)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the experimental and simulation datasets.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Output directory (default: data_dir from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one method on one fold and save the model document.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_method)]
        method: Method,
        /// 1-based fold index.
        #[arg(long, default_value_t = 1)]
        fold: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the configured analyses and write the report directory.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Report directory (default: output_dir from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit half-cell parameters to a full-cell curve (CSV with columns q, v).
    Fit {
        #[command(flatten)]
        common: Common,
        curve: PathBuf,
        #[arg(long, default_value_t = 16)]
        starts: usize,
    },
    /// Write the dQ/dV curve of the fresh cell after one degradation mode.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// LAM_PE, LAM_NE or LLI.
        #[arg(long, value_parser = parse_mode)]
        mode: DegradationMode,
        #[arg(long)]
        fraction: f64,
        /// CSV output (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> Result<DegradationMode, String> {
    DegradationMode::parse(s).map_err(|e| e.to_string())
}

enum Failure {
    Config(String),
    Train(String),
    Eval(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Train(_) => 3,
            Failure::Eval(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Train(m) | Failure::Eval(m) => m,
        }
    }
}

type CmdResult = Result<(), Failure>;

fn config_err(e: impl ToString) -> Failure {
    Failure::Config(e.to_string())
}

/// Removes what it created unless disarmed.
struct Cleanup {
    created_dir: Option<PathBuf>,
    files: Vec<PathBuf>,
}

impl Cleanup {
    fn new(dir: &Path) -> std::io::Result<Self> {
        let created_dir = (!dir.exists()).then(|| dir.to_path_buf());
        fs::create_dir_all(dir)?;
        Ok(Self { created_dir, files: Vec::new() })
    }

    fn disarm(mut self) {
        self.created_dir = None;
        self.files.clear();
    }
}

impl Drop for Cleanup {
    fn drop(&mut self) {
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if let Some(d) = &self.created_dir {
            let _ = fs::remove_dir_all(d);
        }
    }
}

fn load_bench(cfg: &RunConfig) -> Result<Benchmark, Failure> {
    Benchmark::load(&cfg.data_dir, &cfg.dataset).map_err(|e| {
        config_err(format!("cannot load dataset from {}: {e} (run `battdiag generate` first)", cfg.data_dir.display()))
    })
}

fn generate(cfg: &RunConfig, out: &Path, exec: Execution) -> CmdResult {
    let mut guard = Cleanup::new(out).map_err(config_err)?;
    guard.files =
        vec![out.join(battdiag::datagen::EXP_FILE), out.join(battdiag::datagen::SIM_FILE), out.join("dataset.json")];
    let bench = Benchmark::generate(&cfg.dataset, exec).map_err(config_err)?;
    make_folds(&bench.exp, cfg.evaluation.folds, cfg.evaluation.seed).map_err(config_err)?;
    bench.save(out).map_err(config_err)?;
    let record = serde_json::json!({
        "config_hash": cfg.hash(),
        "experimental_records": bench.exp.len(),
        "simulation_records": bench.sim.len(),
        "simulation_top_records": bench.sim_top.len(),
        "dataset": cfg.dataset,
    });
    fs::write(out.join("dataset.json"), serde_json::to_string_pretty(&record).expect("json")).map_err(config_err)?;
    guard.disarm();
    println!("{} experimental, {} simulation records", bench.exp.len(), bench.sim.len());
    println!("{} simulation records in the top-degradation subset", bench.sim_top.len());
    println!("wrote {}", out.display());
    Ok(())
}

fn train(cfg: &RunConfig, method: Method, fold: usize, out: &Path, exec: Execution) -> CmdResult {
    let bench = load_bench(cfg)?;
    let plan = make_folds(&bench.exp, cfg.evaluation.folds, cfg.evaluation.seed).map_err(config_err)?;
    if fold == 0 || fold > plan.folds.len() {
        return Err(config_err(format!("fold must lie in 1..={}, got {fold}", plan.folds.len())));
    }
    let train = plan.train(&bench.exp, fold - 1);
    println!(
        "{}",
        composition_line(method, train.len(), bench.sim.len(), bench.sim_top.len(), cfg.methods.augment_full_grid)
    );
    let shared = SharedModels::new();
    let data = TrainingData {
        exp: &train,
        sim: &bench.sim,
        sim_top: &bench.sim_top,
        pair: bench.pair.clone(),
        shared: &shared,
        exec,
    };
    let seed = job_seed(cfg.evaluation.seed, 0, fold - 1);
    let model =
        train_method(method, &data, &cfg.methods, seed).map_err(|e| Failure::Train(format!("{method}: {e}")))?;
    if let Some(r) = shared.surrogate_report() {
        println!("surrogate max holdout residual: {:.3}%", 100.0 * r.max_residual());
    }
    let json = model.to_json().map_err(|e| Failure::Train(e.to_string()))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(config_err)?;
    }
    fs::write(out, json).map_err(config_err)?;
    println!("exposure: {} rows; saved {}", model.exposure(), out.display());
    Ok(())
}

fn evaluate(cfg: &RunConfig, out: &Path, exec: Execution) -> CmdResult {
    let bench = load_bench(cfg)?;
    let guard = Cleanup::new(out).map_err(config_err)?;
    let manifest = run_evaluation(&bench, &cfg.methods, &cfg.evaluation, out, &cfg.hash(), exec)
        .map_err(|e| Failure::Eval(e.to_string()))?;
    guard.disarm();
    for (m, n) in &manifest.train_counts {
        let seen = manifest.exposures.get(m).map(|e| format!(" (trained on {e})")).unwrap_or_default();
        println!("train rows {m}: {n}{seen}");
    }
    println!("leakage free: {}", manifest.leakage_free);
    if let Some(p) = manifest.directional_pass {
        println!("directional checks pass: {p}");
    }
    for (m, b) in &manifest.late_bubble {
        println!("late-life bubble {m}: {b:.3}");
    }
    let mut failed = Vec::new();
    for (a, s) in &manifest.analyses {
        match s {
            AnalysisStatus::Ok => println!("{a}: ok"),
            AnalysisStatus::Skipped => {}
            AnalysisStatus::Failed(e) => {
                println!("{a}: FAILED: {e}");
                failed.push(a.clone());
            }
        }
    }
    println!("report written to {}", out.display());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Eval(format!("analyses failed: {}", failed.join(", "))))
    }
}

fn read_curve(path: &Path, cfg: &RunConfig) -> Result<FullCellCurve, Failure> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let mut q = Vec::new();
    let mut v = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if i == 0 || line.is_empty() {
            continue;
        }
        let mut it = line.split(',').map(|s| s.trim().parse::<f64>());
        match (it.next(), it.next()) {
            (Some(Ok(a)), Some(Ok(b))) => {
                q.push(a);
                v.push(b);
            }
            _ => return Err(config_err(format!("{}: line {}: expected two numbers `q,v`", path.display(), i + 1))),
        }
    }
    FullCellCurve::new(q, v, cfg.dataset.window).map_err(config_err)
}

fn fit(cfg: &RunConfig, curve: &Path, starts: usize, exec: Execution) -> CmdResult {
    let pair = cfg.dataset.electrodes.load().map_err(config_err)?;
    let target = read_curve(curve, cfg)?;
    let opts = FitOptions { starts, seed: cfg.evaluation.seed, execution: exec, ..Default::default() };
    let (p, report) = fit_halfcell_auto(&pair, &target, &opts).map_err(|e| Failure::Train(e.to_string()))?;
    let health = health_params(&pair, &p, cfg.dataset.window).map_err(|e| Failure::Train(e.to_string()))?;
    let doc =
        serde_json::json!({ "params": p, "health": health, "loss": report.loss, "best_start": report.best_start });
    println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
    Ok(())
}

fn simulate(cfg: &RunConfig, mode: DegradationMode, fraction: f64, out: Option<&Path>) -> CmdResult {
    let pair = cfg.dataset.electrodes.load().map_err(config_err)?;
    let fresh = cfg.dataset.aging.fresh;
    let base = feature_curve(&pair, &fresh, cfg.dataset.window).map_err(config_err)?;
    let curve = single_mode_icq(&pair, &fresh, mode, fraction, cfg.dataset.window).map_err(config_err)?;
    let mut text = String::from("voltage,dqdv_fresh,dqdv_degraded\n");
    for ((v, a), b) in curve.v_grid.iter().zip(&base.dqdv).zip(&curve.dqdv) {
        text.push_str(&format!("{v},{a},{b}\n"));
    }
    match out {
        Some(p) => fs::write(p, text).map_err(config_err)?,
        None => std::io::stdout().write_all(text.as_bytes()).map_err(config_err)?,
    }
    Ok(())
}

fn command() -> clap::Command {
    let all = ["data_dir", "output_dir", "dataset", "methods", "evaluation"];
    Cli::command()
        .mut_subcommand("generate", |c| {
            c.after_help(config_keys(&["data_dir", "dataset", "evaluation.folds", "evaluation.seed"]))
        })
        .mut_subcommand("train", |c| {
            c.after_help(config_keys(&["data_dir", "dataset", "methods", "evaluation.folds", "evaluation.seed"]))
        })
        .mut_subcommand("evaluate", |c| c.after_help(config_keys(&all)))
        .mut_subcommand("fit", |c| {
            c.after_help(config_keys(&["dataset.electrodes", "dataset.window", "evaluation.seed"]))
        })
        .mut_subcommand("simulate", |c| {
            c.after_help(config_keys(&["dataset.electrodes", "dataset.window", "dataset.aging.fresh"]))
        })
}

fn run(cli: Cli) -> CmdResult {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    let load = |c: &Common| RunConfig::load(c.config.as_deref(), c.seed).map_err(Failure::Config);
    match &cli.cmd {
        Cmd::Generate { common, out } => {
            let cfg = load(common)?;
            let out = out.clone().unwrap_or_else(|| cfg.data_dir.clone());
            with_jobs(cli.jobs, || generate(&cfg, &out, exec))
        }
        Cmd::Train { common, method, fold, out } => {
            let cfg = load(common)?;
            with_jobs(cli.jobs, || train(&cfg, *method, *fold, out, exec))
        }
        Cmd::Evaluate { common, out } => {
            let cfg = load(common)?;
            let out = out.clone().unwrap_or_else(|| cfg.output_dir.clone());
            with_jobs(cli.jobs, || evaluate(&cfg, &out, exec))
        }
        Cmd::Fit { common, curve, starts } => {
            let cfg = load(common)?;
            with_jobs(cli.jobs, || fit(&cfg, curve, *starts, exec))
        }
        Cmd::Simulate { common, mode, fraction, out } => {
            let cfg = load(common)?;
            simulate(&cfg, *mode, *fraction, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let matches = command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
