use std::sync::{Arc, OnceLock};

use battdiag::datagen::{
    evaluate_sample, filter_top_degradation, generate_trajectories, simulate_grid, AgingConfig, GridMethod,
    LabeledDataset, Stage, DEFAULT_GRID_POINTS, DEFAULT_GRID_SEED, DEFAULT_TOP_FRACTION,
};
use battdiag::electrode::ElectrodePair;
use battdiag::halfcell::{health_params, HalfCellParams, ParamBounds, PeakConfig, VoltageWindow};
use battdiag::learners::autodiff::Tape;
use battdiag::learners::{grad_check, GprControl, KernelSpec, Standardizer, TrainControl};
use battdiag::linalg::Matrix;
use battdiag::piml::*;
use battdiag::sampling::{standard_normal, stream};
use battdiag::Execution;
use proptest::prelude::*;
use rand::Rng;

struct Fixture {
    pair: Arc<ElectrodePair>,
    sim: LabeledDataset,
    surrogate: Arc<SurrogateHc>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let pair = ElectrodePair::synthetic();
        let w = VoltageWindow::default();
        let sim = simulate_grid(
            &pair,
            &ParamBounds::default(),
            DEFAULT_GRID_POINTS,
            GridMethod::LatinHypercube,
            DEFAULT_GRID_SEED,
            w,
            Execution::Parallel,
        )
        .unwrap();
        let centers: Vec<_> = sim.records.iter().map(|r| r.params).collect();
        let surrogate = train_surrogate(&pair, &centers, w, &SurrogateControl::default(), Execution::Parallel).unwrap();
        Fixture { pair: Arc::new(pair), sim, surrogate: Arc::new(surrogate) }
    })
}

fn small_exp() -> LabeledDataset {
    let cfg = AgingConfig { cells_per_group: 2, rpt_count: 15, n_early: 5, ..Default::default() };
    let ds = generate_trajectories(&ElectrodePair::synthetic(), &cfg, VoltageWindow::default(), Execution::Parallel)
        .unwrap();
    ds.filter(|r| r.stage == Stage::Early)
}

fn quick_net(seed: u64) -> TrainControl {
    TrainControl { max_epochs: 5, seed, ..Default::default() }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn surrogate_matches_direct_evaluation() {
    let f = fixture();
    let w = VoltageWindow::default();
    let peaks = PeakConfig::default();
    let s = &f.surrogate;
    assert!(s.report.max_residual() < 0.005, "{:?}", s.report);

    // Grid points whose curve shows a single peak have no peak-position truth.
    let direct: Vec<_> =
        f.sim.records.iter().step_by(20).filter_map(|r| evaluate_sample(&f.pair, &r.params, w, &peaks).ok()).collect();
    assert!(direct.len() > 30);
    let pred = s.predict(&direct.iter().map(|d| d.params).collect::<Vec<_>>());
    for (i, d) in direct.iter().enumerate() {
        let truth = [d.health.q_cell, d.health.lii, d.peaks[0], d.peaks[1]];
        for k in 0..4 {
            assert!(rel(pred[(i, k)], truth[k]) < 0.005, "center {i} output {k}");
        }
    }

    let mut rng = stream(99, &[]);
    let mut draws = Vec::new();
    while draws.len() < 200 {
        let c = s.centers[rng.random_range(0..s.centers.len())].to_array();
        let p = HalfCellParams::from_array(c.map(|v| v * (1.0 + 0.05 * standard_normal(&mut rng).clamp(-3.0, 3.0))));
        if !s.in_envelope(&p) {
            continue;
        }
        if let Ok(d) = evaluate_sample(&f.pair, &p, w, &peaks) {
            draws.push(d);
        }
    }
    let pred = s.predict(&draws.iter().map(|d| d.params).collect::<Vec<_>>());
    for (i, d) in draws.iter().enumerate() {
        let truth = [d.health.q_cell, d.health.lii, d.peaks[0], d.peaks[1]];
        for k in 0..4 {
            assert!(rel(pred[(i, k)], truth[k]) < 0.01, "draw {i} output {k}: {} vs {}", pred[(i, k)], truth[k]);
        }
    }
}

fn pinn_inputs(f: &Fixture, n: usize) -> (LabeledDataset, PinnTargets) {
    let exp = small_exp();
    let mut ds = exp.clone();
    ds.records.truncate(n);
    let t = PinnTargets::from_dataset(&ds, &f.pair, &PeakConfig::default());
    (ds, t)
}

fn loss_terms(f: &Fixture, t: &PinnTargets, w: LossWeights, pred: &Matrix, truth: &Matrix) -> [f64; 4] {
    let loss = PinnLoss::new(&f.surrogate, t, w);
    let rows: Vec<usize> = (0..truth.rows()).collect();
    let mut tape = Tape::new();
    let out = tape.constant(pred.clone());
    let v = loss.terms(&mut tape, out, truth, &rows);
    v.map(|x| tape.scalar(x))
}

#[test]
fn pinn_loss_contracts() {
    let f = fixture();
    let (_, t) = pinn_inputs(f, 32);
    let stats = Standardizer::fit(&t.theta);
    let truth_std = stats.transform(&t.theta);

    // Perfect predictions: parameter term vanishes, surrogate terms stay below its tolerance.
    let [l1, l2, l3, _] = loss_terms(f, &t, LossWeights::default(), &truth_std, &truth_std);
    assert_eq!(l1, 0.0);
    assert!(l2 < 2.5e-5 && l3 < 2.5e-5, "{l2} {l3}");

    let mut rng = stream(3, &[]);
    let mut noisy = truth_std.clone();
    for v in noisy.as_mut_slice() {
        *v += 0.3 * standard_normal(&mut rng);
    }
    let loss = PinnLoss::new(&f.surrogate, &t, LossWeights::from_lambdas(0.0, 0.0));
    let rows: Vec<usize> = (0..32).collect();
    let mut tape = Tape::new();
    let out = tape.constant(noisy.clone());
    let [l1, _, _, total] = loss.terms(&mut tape, out, &truth_std, &rows);
    assert_eq!(tape.scalar(total).to_bits(), tape.scalar(l1).to_bits());

    let [l1, l2, l3, total] = loss_terms(f, &t, LossWeights::from_lambdas(1.0, 1.0), &noisy, &truth_std);
    assert!(l1 > 0.0 && l2 > 0.0 && l3 > 0.0);
    assert_eq!(total, l1 + l2 + l3);
}

#[test]
fn pinn_gradient_matches_finite_differences() {
    let f = fixture();
    let (ds, t) = pinn_inputs(f, 32);
    let loss = PinnLoss::new(&f.surrogate, &t, LossWeights::default());
    let mut net = battdiag::learners::DenseNet::new(&NET_LAYERS, battdiag::learners::Activation::Relu, 0).unwrap();
    net.x_stats = Standardizer::fit(&ds.features());
    net.y_stats = Standardizer::fit(&t.theta);
    let xs = net.x_stats.transform(&ds.features());
    let ys = net.y_stats.transform(&t.theta);
    let rows: Vec<usize> = (0..32).collect();
    for seed in 0..5u64 {
        let fresh = battdiag::learners::DenseNet::new(&NET_LAYERS, battdiag::learners::Activation::Relu, seed).unwrap();
        net.set_params_flat(&fresh.params_flat());
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
        assert!(report.passed(), "seed {seed}: {report:?}");
    }
}

proptest! {
    #[test]
    fn lambda_ratio_round_trip(l1 in 0.0f64..50.0, l2 in 0.0f64..50.0) {
        let r = LossWeights::from_lambdas(l1, l2).ratios();
        prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let back = LossWeights::from_ratios(r).unwrap().lambdas().unwrap();
        prop_assert!((back.0 - l1).abs() <= 1e-12 * l1.max(1.0));
        prop_assert!((back.1 - l2).abs() <= 1e-12 * l2.max(1.0));
    }
}

#[test]
fn loss_weight_validation() {
    assert!(LossWeights::from_ratios([0.0, 0.0, 0.0]).is_err());
    assert!(LossWeights::from_ratios([-0.1, 0.5, 0.6]).is_err());
    assert_eq!(LossWeights::one_varied(1, 0.5).unwrap().ratios(), [0.25, 0.5, 0.25]);
    assert!(LossWeights::from_ratios([0.0, 1.0, 0.0]).unwrap().lambdas().is_none());
}

#[test]
fn pinn_reports_exact_forward_model() {
    let f = fixture();
    let exp = small_exp();
    let w = VoltageWindow::default();
    let top = filter_top_degradation(
        &f.sim,
        DEFAULT_TOP_FRACTION,
        &health_params(&f.pair, &HalfCellParams::fresh(), w).unwrap(),
    );
    let mut train = exp.clone();
    train.records.extend(top.records.iter().cloned());
    let m = train_pinn(&train, f.pair.clone(), f.surrogate.clone(), LossWeights::default(), &quick_net(1)).unwrap();
    assert_eq!(m.history.n_rows, exp.len() + top.len());
    let x = exp.features();
    let params = m.predict_params(&x);
    let (health, fallback) = m.predict(&x);
    for (i, p) in params.iter().enumerate() {
        if fallback.contains(&i) {
            continue;
        }
        let h = health_params(&f.pair, p, w).unwrap().to_array();
        for k in 0..4 {
            assert_eq!(health[(i, k)].to_bits(), h[k].to_bits());
        }
    }
    let back = Predictor::from_json(&Predictor::Pinn(m.clone()).to_json().unwrap()).unwrap();
    assert_eq!(back.predict(&x), Predictor::Pinn(m).predict(&x));
}

fn smooth(x: &[f64]) -> [f64; 4] {
    [x[0].sin() + 2.0, x[1] * x[0] + 1.0, (x[2] * 0.5).cos(), x[0] + x[1] + x[2]]
}

fn random_inputs(n: usize, seed: u64) -> Matrix {
    let mut rng = stream(seed, &[]);
    Matrix::from_vec(n, 3, (0..3 * n).map(|_| rng.random::<f64>() * 3.0).collect())
}

fn targets(x: &Matrix) -> Matrix {
    Matrix::from_rows(&(0..x.rows()).map(|i| smooth(x.row(i))).collect::<Vec<_>>())
}

fn fixed_ck(nugget: f64) -> CoKrigingConfig {
    CoKrigingConfig {
        kernel_low: KernelSpec::matern52(1.0, 1.0),
        nugget_low: nugget,
        kernel_delta: KernelSpec::matern32(1.0, 1.0),
        nugget_delta: nugget,
        estimate_rho: false,
        gpr: GprControl { optimize: false, ..Default::default() },
    }
}

#[test]
fn cokriging_degenerates_to_low_fidelity() {
    let xl = random_inputs(60, 1);
    let cfg = fixed_ck(1e-10);
    let low = Arc::new(LowFidelity::fit(&xl, &targets(&xl), cfg.kernel_low, cfg.nugget_low, &cfg.gpr).unwrap());
    let xh = xl.select_rows(&(0..60).step_by(5).collect::<Vec<_>>());
    let yh = low.predict_mean(&xh);
    let ck = train_cokriging(&xh, &yh, low.clone(), &cfg).unwrap();
    assert_eq!(ck.exposure(), 72);

    let probe = random_inputs(25, 2);
    let a = ck.predict_mean(&probe);
    let b = low.predict_mean(&probe);
    for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
        assert!((u - v).abs() < 1e-6, "{u} vs {v}");
    }

    let var = ck.posterior_variance(&xh).unwrap();
    for t in 0..4 {
        let col = yh.column(t);
        let target_var = Standardizer::fit_vec(&col).scale[0].powi(2);
        for i in 0..xh.rows() {
            assert!(var[(i, t)] <= 1e-6 * target_var, "target {t} row {i}: {} vs {}", var[(i, t)], target_var);
        }
    }
    let far = ck.posterior_variance(&Matrix::from_rows(&[[30.0, 30.0, 30.0]])).unwrap();
    assert!(far.as_slice().iter().all(|v| *v > 0.0));
}

#[test]
fn cokriging_estimates_scale_factor() {
    let xl = random_inputs(50, 5);
    let mut cfg = fixed_ck(1e-6);
    let low = Arc::new(LowFidelity::fit(&xl, &targets(&xl), cfg.kernel_low, cfg.nugget_low, &cfg.gpr).unwrap());
    // High-fidelity points on the low-fidelity design, where f_L is pinned down.
    let xh = xl.select_rows(&(0..50).step_by(4).collect::<Vec<_>>());
    let yh = low.predict_mean(&xh).map(|v| 0.5 * v);
    cfg.estimate_rho = true;
    let ck = train_cokriging(&xh, &yh, low, &cfg).unwrap();
    for r in &ck.rho {
        assert!((r - 0.5).abs() < 0.05, "{:?}", ck.rho);
    }
}

#[test]
fn cokriging_preconditions() {
    let xl = random_inputs(3, 1);
    let cfg = fixed_ck(1e-6);
    assert!(LowFidelity::fit(&xl, &targets(&xl), cfg.kernel_low, cfg.nugget_low, &cfg.gpr).is_err());
}

fn enet_cfg() -> EnetConfig {
    EnetConfig { alpha: 1e-4, l1_ratio: 0.5, tol: 1e-10, ..Default::default() }
}

fn linear_problem(n: usize, seed: u64) -> (Matrix, Matrix) {
    let x = random_inputs(n, seed);
    let y = Matrix::from_rows(
        &(0..n)
            .map(|i| {
                let r = x.row(i);
                [2.0 * r[0] - r[1] + 5.0, r[2] + 1.0, 0.5 * r[0] + 3.0, r[1] - r[2] + 7.0]
            })
            .collect::<Vec<_>>(),
    );
    (x, y)
}

#[test]
fn delta_enet_reductions() {
    let (xs, ys) = linear_problem(80, 1);
    let (xe, ye) = linear_problem(30, 2);
    let cfg = enet_cfg();
    let exec = Execution::Sequential;

    // Zero residuals: corrector collapses, prediction is the estimator.
    let yfit = EnetSet::fit(&xs, &ys, &cfg, exec).unwrap().predict(&xe);
    let m = train_delta_enet(&xe, &yfit, &xs, &ys, &cfg, exec).unwrap();
    assert_eq!(m.exposure(), 110);
    let probe = random_inputs(10, 9);
    let (a, b) = (m.predict(&probe), m.estimator.predict(&probe));
    for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
        assert!((u - v).abs() < 1e-6);
    }

    // Forced zero estimator: identical to the baseline net.
    let zeros = Matrix::zeros(xs.rows(), 4);
    let m = train_delta_enet(&xe, &ye, &xs, &zeros, &cfg, exec).unwrap();
    let base = train_base_enet(&xe, &ye, &cfg, exec).unwrap();
    for (u, v) in m.predict(&probe).as_slice().iter().zip(base.predict(&probe).as_slice()) {
        assert!((u - v).abs() < 1e-9);
    }

    // Constant bias between fidelities is removed by the corrector.
    let c = 4.0;
    let shifted = ye.map(|v| v + c);
    let m = train_delta_enet(&xe, &shifted, &xs, &ys, &cfg, exec).unwrap();
    let est = m.estimator.predict(&probe);
    let truth = targets_linear(&probe);
    let pred = m.predict(&probe);
    for i in 0..probe.rows() {
        for t in 0..4 {
            let before = (est[(i, t)] - (truth[(i, t)] + c)).abs();
            let after = (pred[(i, t)] - (truth[(i, t)] + c)).abs();
            assert!(before > 0.9 * c && after <= 0.1 * c, "{before} {after}");
        }
    }
}

fn targets_linear(x: &Matrix) -> Matrix {
    let n = x.rows();
    Matrix::from_rows(
        &(0..n)
            .map(|i| {
                let r = x.row(i);
                [2.0 * r[0] - r[1] + 5.0, r[2] + 1.0, 0.5 * r[0] + 3.0, r[1] - r[2] + 7.0]
            })
            .collect::<Vec<_>>(),
    )
}

#[test]
fn augmentation_with_empty_simulation_is_the_baseline() {
    let (xe, ye) = linear_problem(30, 2);
    let cfg = enet_cfg();
    let aug =
        train_augmented(&xe, &ye, &Matrix::zeros(0, 3), &Matrix::zeros(0, 4), &cfg, Execution::Sequential).unwrap();
    let base = train_base_enet(&xe, &ye, &cfg, Execution::Sequential).unwrap();
    let probe = random_inputs(10, 4);
    assert_eq!(aug.predict(&probe), base.predict(&probe));
    assert_eq!(aug.rows, 30);
}

#[test]
fn baselines_on_constant_targets() {
    let exp = small_exp();
    let x = exp.features();
    let y = Matrix::from_rows(&vec![[230.0, 2.1, 1.05, 260.0]; x.rows()]);
    let probe = x.select_rows(&[0, 3, 7]);
    let net = train_base_net(&x, &y, &quick_net(0)).unwrap().predict(&probe);
    let gpr =
        train_base_gpr(&x, &y, &GprBaselineConfig::default(), &GprControl { optimize: false, ..Default::default() })
            .unwrap()
            .predict(&probe);
    let enet = train_base_enet(&x, &y, &EnetConfig::default(), Execution::Sequential).unwrap().predict(&probe);
    for m in [net, gpr, enet] {
        for i in 0..3 {
            for (k, c) in [230.0, 2.1, 1.05, 260.0].iter().enumerate() {
                assert!((m[(i, k)] - c).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn baseline_net_is_deterministic_and_distinct_from_pinn_head() {
    let exp = small_exp();
    let (x, y) = (exp.features(), exp.targets());
    let a = train_base_net(&x, &y, &quick_net(4)).unwrap();
    let b = train_base_net(&x, &y, &quick_net(4)).unwrap();
    assert_eq!(a.predict(&x), b.predict(&x));
    let f = fixture();
    let p = train_pinn(&exp, f.pair.clone(), f.surrogate.clone(), LossWeights::default(), &quick_net(4)).unwrap();
    // Same architecture, different heads: health parameters vs. half-cell parameters.
    assert_eq!(a.net.layers, p.net.layers);
    assert_ne!(a.net.y_stats, p.net.y_stats);
}

#[test]
fn method_names_and_predictor_tags() {
    for m in Method::ALL {
        assert_eq!(Method::parse(m.name()).unwrap(), m);
    }
    assert!(Method::parse("kriging").unwrap_err().to_string().contains("base_gpr"));
    let (xe, ye) = linear_problem(20, 3);
    let p = Predictor::BaseEnet(train_base_enet(&xe, &ye, &enet_cfg(), Execution::Sequential).unwrap());
    let json = p.to_json().unwrap();
    assert!(json.contains("\"method\":\"base_enet\""));
    let back = Predictor::from_json(&json).unwrap();
    assert_eq!(back.method(), Method::BaseEnet);
    assert_eq!(back.predict(&xe), p.predict(&xe));
    assert_eq!(back.exposure(), 20);
}
