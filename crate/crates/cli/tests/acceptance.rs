//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use battdiag::datagen::{
    evaluate_sample, generate_trajectories, simulate_grid, AgingConfig, Benchmark, DatasetConfig, GridMethod,
    LabeledDataset, Stage, DEFAULT_GRID_POINTS, DEFAULT_GRID_SEED,
};
use battdiag::electrode::ElectrodePair;
use battdiag::evaluation::{
    directional_checks, late_bubble_means, rmspe, CvOutcome, EvalConfig, Harness, TrajectoryRow,
};
use battdiag::halfcell::{
    apply_mode, detect_peaks, feature_curve, fit_halfcell_auto, health_params, reconstruct_ocv, DegradationMode,
    FitOptions, HalfCellParams, ParamBounds, PeakConfig, VoltageWindow,
};
use battdiag::learners::{
    enet_fit, grad_check, Activation, DenseNet, EnetControl, GprControl, KernelKind, KernelSpec, Standardizer,
};
use battdiag::linalg::{Cholesky, Matrix};
use battdiag::piml::{
    train_cokriging, train_surrogate, CoKrigingConfig, LossWeights, LowFidelity, Method, MethodConfig, PinnLoss,
    PinnTargets, SurrogateControl, SurrogateHc, NET_LAYERS,
};
use battdiag::sampling::{standard_normal, stream};
use battdiag::Execution;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn window() -> VoltageWindow {
    VoltageWindow::default()
}

fn surrogate() -> &'static (ElectrodePair, LabeledDataset, SurrogateHc) {
    static S: OnceLock<(ElectrodePair, LabeledDataset, SurrogateHc)> = OnceLock::new();
    S.get_or_init(|| {
        let pair = ElectrodePair::synthetic();
        let sim = simulate_grid(
            &pair,
            &ParamBounds::default(),
            DEFAULT_GRID_POINTS,
            GridMethod::LatinHypercube,
            DEFAULT_GRID_SEED,
            window(),
            Execution::Parallel,
        )
        .unwrap();
        let centers: Vec<_> = sim.records.iter().map(|r| r.params).collect();
        let s = train_surrogate(&pair, &centers, window(), &SurrogateControl::default(), Execution::Parallel).unwrap();
        (pair, sim, s)
    })
}

struct FullRun {
    bench: Benchmark,
    cv: CvOutcome,
    trajectories: Vec<TrajectoryRow>,
}

fn full_run() -> &'static FullRun {
    static R: OnceLock<FullRun> = OnceLock::new();
    R.get_or_init(|| {
        let bench = Benchmark::generate(&DatasetConfig::default(), Execution::Parallel).unwrap();
        let methods = MethodConfig::default();
        let eval = EvalConfig::default();
        let (cv, trajectories) = {
            let h = Harness::new(&bench, &methods, &eval, Execution::Parallel).unwrap();
            let cv = h.run_cv().unwrap();
            let t = h.extrapolation(&cv).unwrap();
            (cv, t)
        };
        FullRun { bench, cv, trajectories }
    })
}

fn cli(dir: &Path, args: &[&str]) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_battdiag")).args(args).current_dir(dir).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    (out.status.success(), text)
}

fn c1_training_counts() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (ok, gen) = cli(dir.path(), &["generate"]);
    if !ok || !gen.contains("960 experimental, 784 simulation records") {
        return Err(format!("generate: {gen}"));
    }
    let mut lines = Vec::new();
    for (m, line) in [
        ("base_enet", "train rows: 180\n"),
        ("augmented", "train rows: 180 exp + 32 sim = 212\n"),
        ("delta_enet", "train rows: 180 exp + 784 sim = 964\n"),
    ] {
        let (ok, out) = cli(dir.path(), &["train", "--method", m, "--fold", "1", "--out", "model.json"]);
        if !ok || !out.contains(line) {
            return Err(format!("train {m}: {out}"));
        }
        lines.push(format!("{m}: {}", line.trim()));
    }
    let run = full_run();
    let expected = [
        ("base_net", 180),
        ("base_gpr", 180),
        ("base_enet", 180),
        ("pinn", 212),
        ("augmented", 212),
        ("delta_enet", 964),
        ("cokriging", 964),
    ];
    for (m, n) in expected {
        for f in 0..4 {
            let got = run.cv.exposure(m, f);
            if got != Some(n) {
                return Err(format!("{m} fold {}: exposure {got:?}, expected {n}", f + 1));
            }
        }
    }
    Ok(format!(
        "{}; harness exposures on all 4 folds: baselines 180, pinn 212, augmented 212, delta/cokriging 964",
        lines.join(", ")
    ))
}

fn c2_halfcell_round_trip() -> Outcome {
    let pair = ElectrodePair::synthetic();
    let draws = simulate_grid(
        &pair,
        &ParamBounds::default(),
        50,
        GridMethod::LatinHypercube,
        2024,
        window(),
        Execution::Parallel,
    )
    .unwrap();
    let mut worst = 0.0f64;
    for (i, r) in draws.records.iter().enumerate() {
        let curve = reconstruct_ocv(&pair, &r.params, window(), 300).unwrap();
        let opts = FitOptions { starts: 16, seed: i as u64, ..Default::default() };
        let (p, _) = fit_halfcell_auto(&pair, &curve, &opts).map_err(|e| format!("draw {i}: {e}"))?;
        for (a, b) in p.to_array().iter().zip(r.params.to_array()) {
            worst = worst.max(((a - b) / b).abs());
        }
    }
    check(worst <= 0.02, format!("50 draws, 16 starts, worst relative error {worst:.2e} (limit 2e-2)"))
}

fn c3_conservation() -> Outcome {
    let pair = ElectrodePair::synthetic();
    let draws = simulate_grid(
        &pair,
        &ParamBounds::default(),
        100,
        GridMethod::LatinHypercube,
        77,
        window(),
        Execution::Parallel,
    )
    .unwrap();
    let mut worst = 0.0f64;
    for r in &draws.records {
        let q = health_params(&pair, &r.params, window()).unwrap().q_cell;
        let f = feature_curve(&pair, &r.params, window()).unwrap();
        worst = worst.max(((f.integral() - q) / q).abs());
    }
    check(worst < 0.01, format!("{} draws, worst |∫dQ/dV dV − Q|/Q = {:.3}%", draws.len(), 100.0 * worst))
}

fn c4_degradation_directions() -> Outcome {
    let pair = ElectrodePair::synthetic();
    let fresh = HalfCellParams::fresh();
    let cfg = PeakConfig::default();
    let peaks = |p: &HalfCellParams| {
        detect_peaks(&feature_curve(&pair, p, window()).unwrap(), &cfg).unwrap().top_two().unwrap()
    };
    let q = |p: &HalfCellParams| health_params(&pair, p, window()).unwrap().q_cell;
    let p0 = peaks(&fresh);
    let lli = apply_mode(&pair, &fresh, DegradationMode::Lli, 0.2).unwrap();
    let p1 = peaks(&lli);
    let lam_pe = apply_mode(&pair, &fresh, DegradationMode::LamPe, 0.2).unwrap();
    let lam_ne = apply_mode(&pair, &fresh, DegradationMode::LamNe, 0.2).unwrap();
    let (q0, qp, qn) = (q(&fresh), q(&lam_pe), q(&lam_ne));
    let ok = p1[0].height < p0[0].height && p1[1].height < p0[1].height && qp < q0 && qn < q0;
    check(
        ok,
        format!(
            "LLI peaks {:.1}→{:.1}, {:.1}→{:.1} mAh/V; Q fresh {q0:.2}, LAM_PE {qp:.2}, LAM_NE {qn:.2} mAh",
            p0[0].height, p1[0].height, p0[1].height, p1[1].height
        ),
    )
}

fn c5_pinn_gradient() -> Outcome {
    let (pair, _, s) = surrogate();
    let cfg = AgingConfig { cells_per_group: 2, rpt_count: 15, n_early: 5, ..Default::default() };
    let mut ds = generate_trajectories(pair, &cfg, window(), Execution::Parallel).unwrap();
    ds = ds.filter(|r| r.stage == Stage::Early);
    ds.records.truncate(32);
    let t = PinnTargets::from_dataset(&ds, pair, &PeakConfig::default());
    let loss = PinnLoss::new(s, &t, LossWeights::default());
    let mut net = DenseNet::new(&NET_LAYERS, Activation::Relu, 0).unwrap();
    net.x_stats = Standardizer::fit(&ds.features());
    net.y_stats = Standardizer::fit(&t.theta);
    let xs = net.x_stats.transform(&ds.features());
    let ys = net.y_stats.transform(&t.theta);
    let rows: Vec<usize> = (0..ds.len()).collect();
    let mut worst = 0.0f64;
    let mut kinks = 0;
    for seed in 0..5u64 {
        net.set_params_flat(&DenseNet::new(&NET_LAYERS, Activation::Relu, seed).unwrap().params_flat());
        let p0 = net.params_flat();
        let (_, g) = net.loss_and_grad(&xs, &ys, &rows, &loss);
        let report = grad_check(
            |p: &[f64]| {
                let mut probe = net.clone();
                probe.set_params_flat(p);
                probe.loss_value(&xs, &ys, &rows, &loss)
            },
            &p0,
            &g,
            1e-4,
        );
        if !report.passed() {
            return Err(format!("seed {seed}: {report:?}"));
        }
        worst = worst.max(report.max_rel_error);
        kinks += report.kinks.len();
    }
    Ok(format!("5 initializations, max relative error {worst:.2e} (limit 1e-4), {kinks} kink coordinates excluded"))
}

fn c6_cokriging_degeneracy() -> Outcome {
    let inputs = |n: usize, seed: u64| {
        let mut rng = stream(seed, &[]);
        Matrix::from_vec(n, 3, (0..3 * n).map(|_| rng.random::<f64>() * 3.0).collect())
    };
    let f = |x: &Matrix| {
        Matrix::from_rows(
            &(0..x.rows())
                .map(|i| {
                    let r = x.row(i);
                    [r[0].sin() + 2.0, r[1] * r[0] + 1.0, (r[2] * 0.5).cos(), r[0] + r[1] + r[2]]
                })
                .collect::<Vec<_>>(),
        )
    };
    let cfg = CoKrigingConfig {
        kernel_low: KernelSpec::matern52(1.0, 1.0),
        nugget_low: 1e-10,
        kernel_delta: KernelSpec::matern32(1.0, 1.0),
        nugget_delta: 1e-10,
        estimate_rho: false,
        gpr: GprControl { optimize: false, ..Default::default() },
    };
    let xl = inputs(60, 1);
    let low = Arc::new(LowFidelity::fit(&xl, &f(&xl), cfg.kernel_low, cfg.nugget_low, &cfg.gpr).unwrap());
    let xh = xl.select_rows(&(0..60).step_by(5).collect::<Vec<_>>());
    let yh = low.predict_mean(&xh);
    let ck = train_cokriging(&xh, &yh, low.clone(), &cfg).unwrap();
    let probe = inputs(25, 2);
    let (a, b) = (ck.predict_mean(&probe), low.predict_mean(&probe));
    let mean_gap = a.as_slice().iter().zip(b.as_slice()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    let var = ck.posterior_variance(&xh).unwrap();
    let mut worst_ratio = 0.0f64;
    for t in 0..4 {
        let tv = Standardizer::fit_vec(&yh.column(t)).scale[0].powi(2);
        for i in 0..xh.rows() {
            worst_ratio = worst_ratio.max(var[(i, t)] / tv);
        }
    }
    check(
        mean_gap < 1e-6 && worst_ratio <= 1e-6,
        format!(
            "max mean gap {mean_gap:.2e} (limit 1e-6), max variance/target variance {worst_ratio:.2e} (limit 1e-6)"
        ),
    )
}

fn random_matrix(n: usize, p: usize, seed: u64) -> Matrix {
    let mut rng = stream(seed, &[]);
    Matrix::from_vec(n, p, (0..n * p).map(|_| standard_normal(&mut rng)).collect())
}

fn c7_elastic_net() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let x = random_matrix(40, 6, seed);
        let y: Vec<f64> = (0..40).map(|i| x.row(i).iter().sum::<f64>() + (i as f64 * 0.7).sin()).collect();
        let alpha = 0.05;
        let m = enet_fit(&x, &y, alpha, 0.0, &EnetControl { tol: 1e-12, ..Default::default() }).unwrap();
        let xs = Standardizer::fit(&x).transform(&x);
        let ys = Standardizer::fit_vec(&y);
        let yv = DVector::from_iterator(40, y.iter().map(|v| (v - ys.mean[0]) / ys.scale[0]));
        let xm = DMatrix::from_row_slice(40, 6, xs.as_slice());
        let lhs = xm.transpose() * &xm + DMatrix::identity(6, 6) * (40.0 * alpha);
        let w = lhs.lu().solve(&(xm.transpose() * yv)).unwrap();
        for j in 0..6 {
            worst = worst.max((m.weights[j] - w[j]).abs());
        }
    }
    let mut increases = 0;
    for seed in 0..20 {
        let x = random_matrix(50, 12, 100 + seed);
        let y: Vec<f64> = (0..50).map(|i| x[(i, 0)] - 2.0 * x[(i, 3)] + 0.3 * x[(i, 7)] * x[(i, 1)]).collect();
        let m = enet_fit(&x, &y, 0.02, 0.5, &EnetControl::default()).unwrap();
        increases += m.objective_history.windows(2).filter(|w| w[1] > w[0] + 1e-15 * w[0].abs()).count();
    }
    check(
        worst < 1e-6 && increases == 0,
        format!("ridge weight gap {worst:.2e} (limit 1e-6); objective increases over 20 problems: {increases}"),
    )
}

fn c8_kernels() -> Outcome {
    let x = random_matrix(50, 5, 7);
    let mut worst_asym = 0.0f64;
    let mut worst_jitter = 0.0f64;
    for kind in KernelKind::ALL {
        let k = KernelSpec { variance: 1.7, length_scale: 1.3, alpha: 0.8, degree: 3, offset: 0.5, kind };
        let mut g = Matrix::zeros(50, 50);
        for i in 0..50 {
            for j in 0..50 {
                g[(i, j)] = k.eval(x.row(i), x.row(j)).unwrap();
            }
        }
        for i in 0..50 {
            for j in 0..i {
                worst_asym = worst_asym.max((g[(i, j)] - g[(j, i)]).abs() / g[(i, j)].abs().max(1.0));
            }
        }
        let c = Cholesky::with_jitter(&g, 1e-6).map_err(|e| format!("{}: {e}", kind.name()))?;
        worst_jitter = worst_jitter.max(c.jitter);
    }
    let m = KernelSpec::matern32(2.3, 0.7);
    let at_zero = m.eval(&[0.4, -1.0], &[0.4, -1.0]).unwrap();
    check(
        worst_asym <= 1e-12 && worst_jitter <= 1e-6 && at_zero == 2.3,
        format!("7 kernels, max asymmetry {worst_asym:.1e}, max jitter {worst_jitter:.1e}, Matern32(r=0) = {at_zero}"),
    )
}

fn c9_directional() -> Outcome {
    let run = full_run();
    let summary = run.cv.summary();
    let checks = directional_checks(&summary);
    let failed: Vec<String> = checks
        .iter()
        .filter(|d| !d.pass)
        .map(|d| format!("{} {} {:.2}% > {} bound {:.2}%", d.method, d.parameter, d.value, d.baseline, d.bound))
        .collect();
    let bubble = late_bubble_means(&run.trajectories);
    let (bp, bn) = (bubble["pinn"], bubble["base_net"]);
    let mut detail = format!(
        "{} of {} directional checks pass over {} repeats; late-life bubble pinn {bp:.1} vs base_net {bn:.1}",
        checks.len() - failed.len(),
        checks.len(),
        summary[0].repeats
    );
    if !failed.is_empty() {
        detail += &format!("; failing: {}", failed.join("; "));
    }
    println!("            info: {}", full_grid_augmentation(&run.bench));
    check(failed.is_empty() && checks.len() == 16 && bp <= bn && run.cv.failures.is_empty(), detail)
}

/// Augmentation trained on the whole simulation grid, for comparison.
fn full_grid_augmentation(bench: &Benchmark) -> String {
    let methods = MethodConfig { augment_full_grid: true, ..Default::default() };
    let eval = EvalConfig { methods: vec![Method::Augmented, Method::BaseEnet], repeats: 1, ..Default::default() };
    let h = Harness::new(bench, &methods, &eval, Execution::Parallel).unwrap();
    let summary = h.run_cv().unwrap().summary();
    let lii = |m: &str| summary.iter().find(|r| r.method == m).map(|r| r.lii_mean).unwrap_or(f64::NAN);
    format!("augmented on the full 784-point grid: LII {:.2}% vs base_enet {:.2}%", lii("augmented"), lii("base_enet"))
}

fn c10_rmspe_fixture() -> Outcome {
    let truth = Matrix::from_rows(&[[1.0; 4], [1.0; 4], [1.0; 4]]);
    let pred = Matrix::from_rows(&[[1.1; 4], [1.2; 4], [1.0; 4]]);
    let r = rmspe(&pred, &truth).unwrap();
    check(r.iter().all(|v| (v - 12.910).abs() < 1e-3), format!("RMSPE {:.4}% (expected 12.910%)", r[0]))
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn c11_determinism() -> Outcome {
    let config = "[evaluation]\nrepeats = 1\nanalyses = [\"cv\", \"extrapolation\"]\n";
    let mut trees = Vec::new();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        std::fs::write(d.path().join("run.toml"), config).unwrap();
        for cmd in ["generate", "evaluate"] {
            let (ok, out) = cli(d.path(), &[cmd, "--config", "run.toml"]);
            if !ok {
                return Err(format!("{cmd}: {out}"));
            }
        }
        trees.push(tree(d.path()));
    }
    let files = trees[0].len();
    let differing: Vec<String> =
        trees[0].iter().zip(&trees[1]).filter(|(a, b)| a != b).map(|(a, _)| a.0.display().to_string()).collect();
    check(
        trees[0].len() == trees[1].len() && differing.is_empty() && files > 10,
        format!("{files} files compared across two generate+evaluate runs; differing: {differing:?}"),
    )
}

fn c12_surrogate() -> Outcome {
    let (pair, sim, s) = surrogate();
    let cfg = PeakConfig::default();
    let mut worst_center = 0.0f64;
    let direct: Vec<_> =
        sim.records.iter().step_by(20).filter_map(|r| evaluate_sample(pair, &r.params, window(), &cfg).ok()).collect();
    let pred = s.predict(&direct.iter().map(|d| d.params).collect::<Vec<_>>());
    for (i, d) in direct.iter().enumerate() {
        let truth = [d.health.q_cell, d.health.lii, d.peaks[0], d.peaks[1]];
        for k in 0..4 {
            worst_center = worst_center.max(((pred[(i, k)] - truth[k]) / truth[k]).abs());
        }
    }
    let r = &s.report;
    check(
        r.max_residual() < 0.005 && worst_center < 0.005,
        format!(
            "held-out max residual (Q, LII, V1, V2) = {:.3}% {:.3}% {:.3}% {:.3}% on {} samples; {} grid points within {:.3}%",
            100.0 * r.holdout_residual[0],
            100.0 * r.holdout_residual[1],
            100.0 * r.holdout_residual[2],
            100.0 * r.holdout_residual[3],
            r.n_holdout,
            direct.len(),
            100.0 * worst_center
        ),
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("training-set sizes per method", c1_training_counts),
        ("half-cell fit round trip", c2_halfcell_round_trip),
        ("dQ/dV integral equals usable capacity", c3_conservation),
        ("single-mode degradation directions", c4_degradation_directions),
        ("PINN loss gradient", c5_pinn_gradient),
        ("co-kriging degeneracy", c6_cokriging_degeneracy),
        ("elastic net oracles", c7_elastic_net),
        ("kernel suite", c8_kernels),
        ("physics-informed methods vs baselines", c9_directional),
        ("RMSPE fixture", c10_rmspe_fixture),
        ("determinism of generate + evaluate", c11_determinism),
        ("surrogate fidelity", c12_surrogate),
    ];
    let filter: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let r = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("criterion {id:>2} PASS  {name} ({secs:.0} s): {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name} ({secs:.0} s): {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
