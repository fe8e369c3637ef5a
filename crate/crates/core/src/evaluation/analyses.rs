//! The benchmark analyses: method comparison, training-size sweep,
//! extrapolation on one cell, loss-weight and kernel sensitivity, and the
//! fitting comparison.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::cv::{cross_validate, CvOutcome, FailureRow, Model, Split, SummaryRow, Variant};
use super::metrics::{bubble_score, mean_std};
use crate::datagen::{make_folds, Benchmark, FoldPlan, LabeledDataset, Stage};
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::halfcell::{fit_halfcell_auto, reconstruct_ocv, FitOptions};
use crate::learners::{GprControl, KernelKind, KernelSpec};
use crate::piml::{
    train_cokriging, train_method, CoKrigingConfig, LossWeights, LowFidelity, Method, MethodConfig, SharedModels,
    TrainingData,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Cv,
    TrainingSize,
    Extrapolation,
    LossWeights,
    Kernels,
    Fitting,
}

impl Analysis {
    pub const ALL: [Analysis; 6] = [
        Analysis::Cv,
        Analysis::TrainingSize,
        Analysis::Extrapolation,
        Analysis::LossWeights,
        Analysis::Kernels,
        Analysis::Fitting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::Cv => "cv",
            Analysis::TrainingSize => "training_size",
            Analysis::Extrapolation => "extrapolation",
            Analysis::LossWeights => "loss_weights",
            Analysis::Kernels => "kernels",
            Analysis::Fitting => "fitting",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub methods: Vec<Method>,
    pub analyses: Vec<Analysis>,
    pub folds: usize,
    pub repeats: usize,
    /// Drives the fold assignment and every training seed.
    pub seed: u64,
    /// Repeats of the stochastic methods in the sweeps.
    pub sweep_repeats: usize,
    pub training_sizes: Vec<usize>,
    pub loss_ratios: Vec<f64>,
    pub bubble_c1: f64,
    pub bubble_c2: f64,
    /// Cell whose whole life is reported by the extrapolation analysis.
    pub designated_cell: u32,
    pub fitting_cells: Vec<u32>,
    pub fitting_runs: usize,
    /// Hyperparameter search used for each of the 49 kernel pairs.
    pub kernel_gpr: GprControl,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            analyses: vec![Analysis::Cv, Analysis::Extrapolation],
            folds: 4,
            repeats: 10,
            seed: 42,
            sweep_repeats: 3,
            training_sizes: vec![5, 10, 15],
            loss_ratios: vec![0.0, 1.0 / 3.0, 0.5, 2.0 / 3.0, 1.0],
            bubble_c1: 1.0,
            bubble_c2: 10.0,
            designated_cell: 6,
            fitting_cells: vec![6, 14],
            fitting_runs: 5,
            kernel_gpr: GprControl { starts: 2, max_evals: 60, ..Default::default() },
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(invalid("evaluation.methods must name at least one method"));
        }
        if self.analyses.is_empty() {
            return Err(invalid("evaluation.analyses must name at least one analysis"));
        }
        if self.repeats == 0 || self.sweep_repeats == 0 {
            return Err(invalid("repeats must be at least 1"));
        }
        if self.training_sizes.is_empty() || self.training_sizes.contains(&0) {
            return Err(invalid("training_sizes must be positive"));
        }
        if self.loss_ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(invalid("loss_ratios must lie in [0, 1]"));
        }
        if !(self.bubble_c1.is_finite() && self.bubble_c2 >= 0.0) {
            return Err(invalid("bubble constants must be finite, C2 ≥ 0"));
        }
        if self.fitting_runs == 0 {
            return Err(invalid("fitting_runs must be at least 1"));
        }
        Ok(())
    }

    pub fn wants(&self, a: Analysis) -> bool {
        self.analyses.contains(&a)
    }
}

/// Benchmark data, fold plan, and models shared across analyses.
pub struct Harness<'a> {
    pub bench: &'a Benchmark,
    pub plan: FoldPlan,
    pub methods: &'a MethodConfig,
    pub eval: &'a EvalConfig,
    pub shared: SharedModels,
    pub exec: Execution,
}

fn cells(ds: &LabeledDataset, ids: &[u32]) -> LabeledDataset {
    let ids: HashSet<u32> = ids.iter().copied().collect();
    ds.filter(|r| r.fidelity == crate::datagen::Fidelity::ExperimentalSynthetic && ids.contains(&r.cell_id))
}

/// Relabels stages so the first `n_early` RPTs of every cell are early-life.
pub fn relabel_early(ds: &LabeledDataset, n_early: usize) -> LabeledDataset {
    let mut out = ds.clone();
    for r in &mut out.records {
        r.stage = if (r.rpt_index as usize) < n_early { Stage::Early } else { Stage::Late };
    }
    out
}

impl<'a> Harness<'a> {
    pub fn new(bench: &'a Benchmark, methods: &'a MethodConfig, eval: &'a EvalConfig, exec: Execution) -> Result<Self> {
        eval.validate()?;
        methods.validate()?;
        let plan = make_folds(&bench.exp, eval.folds, eval.seed)?;
        Ok(Self { bench, plan, methods, eval, shared: SharedModels::new(), exec })
    }

    /// Early-life rows of the training cells; all rows of the test cells.
    pub fn splits(&self, ds: &LabeledDataset) -> Vec<Split> {
        (0..self.plan.folds.len())
            .map(|f| Split { train: self.plan.train(ds, f), test: cells(ds, &self.plan.folds[f].test_cells) })
            .collect()
    }

    fn reference(&self) -> [f64; 4] {
        self.bench.fresh.to_array()
    }

    fn data<'b>(&'b self, train: &'b LabeledDataset) -> TrainingData<'b> {
        TrainingData {
            exp: train,
            sim: &self.bench.sim,
            sim_top: &self.bench.sim_top,
            pair: self.bench.pair.clone(),
            shared: &self.shared,
            exec: self.exec,
        }
    }

    /// Builds the grid-level models `methods` need before any parallel
    /// work starts. Methods whose shared model fails are returned with the error.
    pub fn prepare(&self, methods: &[Method]) -> Vec<(Method, Error)> {
        let probe = self.plan.train(&self.bench.exp, 0);
        let data = self.data(&probe);
        let mut failed = Vec::new();
        for &m in methods {
            let r = match m {
                Method::Pinn => self.shared.surrogate(&data, self.methods).map(|_| ()),
                Method::Cokriging => self.shared.low_fidelity(&data, self.methods).map(|_| ()),
                Method::DeltaEnet => self.shared.estimator(&data, self.methods).map(|_| ()),
                _ => Ok(()),
            };
            if let Err(e) = r {
                failed.push((m, e));
            }
        }
        failed
    }

    fn run_methods(
        &self,
        analysis: &str,
        splits: &[Split],
        methods: &[Method],
        cfg: &MethodConfig,
        repeats: usize,
    ) -> Result<CvOutcome> {
        let failed = self.prepare(methods);
        let ok: Vec<Method> = methods.iter().copied().filter(|m| !failed.iter().any(|(f, _)| f == m)).collect();
        let variants: Vec<Variant> =
            ok.iter().map(|m| Variant { label: m.name().to_string(), stochastic: m.is_stochastic() }).collect();
        let mut out = cross_validate(
            analysis,
            splits,
            &variants,
            repeats,
            self.eval.seed,
            &self.reference(),
            self.exec,
            |label, train, seed| {
                let m = Method::parse(label)?;
                Ok(Box::new(train_method(m, &self.data(train), cfg, seed)?) as Box<dyn Model>)
            },
        )?;
        for (m, e) in failed {
            out.failures.push(FailureRow {
                analysis: analysis.into(),
                method: m.name().into(),
                repeat: 0,
                fold: 0,
                error: e.to_string(),
            });
        }
        Ok(out)
    }

    /// Method comparison over the folds and repeats.
    pub fn run_cv(&self) -> Result<CvOutcome> {
        let splits = self.splits(&self.bench.exp);
        self.run_methods("cv", &splits, &self.eval.methods, self.methods, self.eval.repeats)
    }

    /// Truncates every training cell to its first k early-life records.
    pub fn training_size_sweep(&self) -> Result<(Vec<TrainingSizeRow>, Vec<FailureRow>)> {
        let max = *self.eval.training_sizes.iter().max().expect("validated non-empty");
        let ds = relabel_early(&self.bench.exp, max);
        let base = self.splits(&ds);
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        for &k in &self.eval.training_sizes {
            let splits: Vec<Split> = (0..base.len())
                .map(|f| Ok(Split { train: self.plan.train_truncated(&ds, f, k)?, test: base[f].test.clone() }))
                .collect::<Result<_>>()?;
            let n_exp = splits[0].train.len();
            let out =
                self.run_methods("training_size", &splits, &self.eval.methods, self.methods, self.eval.sweep_repeats)?;
            for r in out.rows {
                rows.push(TrainingSizeRow {
                    method: r.method,
                    points_per_cell: k,
                    n_exp,
                    repeat: r.repeat,
                    q_cell: r.q_cell,
                    m_p: r.m_p,
                    m_n: r.m_n,
                    lii: r.lii,
                });
            }
            failures.extend(out.failures);
        }
        Ok((rows, failures))
    }

    /// One ratio varied per term, the remainder split evenly.
    pub fn loss_weight_sensitivity(&self) -> Result<(Vec<LossWeightRow>, Vec<FailureRow>)> {
        let grid = loss_ratio_grid(&self.eval.loss_ratios)?;
        let label = |w: &[f64; 3]| format!("{:.6}/{:.6}/{:.6}", w[0], w[1], w[2]);
        let mut variants: Vec<Variant> = Vec::new();
        for (_, _, w) in &grid {
            let l = label(w);
            if !variants.iter().any(|v| v.label == l) {
                variants.push(Variant { label: l, stochastic: true });
            }
        }
        let failed = self.prepare(&[Method::Pinn]);
        if let Some((_, e)) = failed.into_iter().next() {
            return Err(e);
        }
        let ratios: BTreeMap<String, [f64; 3]> = grid.iter().map(|(_, _, w)| (label(w), *w)).collect();
        let splits = self.splits(&self.bench.exp);
        let out = cross_validate(
            "loss_weights",
            &splits,
            &variants,
            self.eval.sweep_repeats,
            self.eval.seed,
            &self.reference(),
            self.exec,
            |l, train, seed| {
                let cfg = MethodConfig { pinn_ratios: ratios[l], ..self.methods.clone() };
                Ok(Box::new(train_method(Method::Pinn, &self.data(train), &cfg, seed)?) as Box<dyn Model>)
            },
        )?;
        let mut rows = Vec::new();
        for (term, ratio, w) in &grid {
            for r in out.rows.iter().filter(|r| r.method == label(w)) {
                rows.push(LossWeightRow {
                    term: *term,
                    ratio: *ratio,
                    r1: w[0],
                    r2: w[1],
                    r3: w[2],
                    repeat: r.repeat,
                    q_cell: r.q_cell,
                    m_p: r.m_p,
                    m_n: r.m_n,
                    lii: r.lii,
                });
            }
        }
        Ok((rows, out.failures))
    }

    /// Co-kriging over every (estimation, correction) kernel pair.
    pub fn kernel_sensitivity(&self) -> Result<(Vec<KernelRow>, Vec<FailureRow>)> {
        let gpr = GprControl { execution: self.exec, ..self.eval.kernel_gpr };
        let base = &self.methods.cokriging;
        let (xs, ys) = (self.bench.sim.features(), self.bench.sim.targets());
        let lows = self.exec.map(&KernelKind::ALL, |&k| {
            let spec =
                KernelSpec { kind: k, ..if k == base.kernel_low.kind { base.kernel_low } else { KernelSpec::new(k) } };
            let inner = GprControl { execution: Execution::Sequential, ..gpr };
            LowFidelity::fit(&xs, &ys, spec, base.nugget_low, &inner).map(Arc::new)
        });
        let mut failures = Vec::new();
        let mut variants = Vec::new();
        let mut low_by_name = BTreeMap::new();
        for (k, l) in KernelKind::ALL.iter().zip(lows) {
            match l {
                Ok(l) => {
                    low_by_name.insert(k.name(), l);
                }
                Err(e) => failures.push(FailureRow {
                    analysis: "kernels".into(),
                    method: format!("{}/*", k.name()),
                    repeat: 0,
                    fold: 0,
                    error: e.to_string(),
                }),
            }
        }
        for lk in KernelKind::ALL {
            if !low_by_name.contains_key(lk.name()) {
                continue;
            }
            for dk in KernelKind::ALL {
                variants.push(Variant { label: format!("{}/{}", lk.name(), dk.name()), stochastic: false });
            }
        }
        let splits = self.splits(&self.bench.exp);
        let out = cross_validate(
            "kernels",
            &splits,
            &variants,
            1,
            self.eval.seed,
            &self.reference(),
            self.exec,
            |l, train, _| {
                let (lk, dk) = l.split_once('/').expect("label has two kernels");
                let dk = KernelKind::parse(dk)?;
                let cfg = CoKrigingConfig {
                    kernel_delta: if dk == base.kernel_delta.kind { base.kernel_delta } else { KernelSpec::new(dk) },
                    gpr: GprControl { execution: Execution::Sequential, ..gpr },
                    ..base.clone()
                };
                let m = train_cokriging(&train.features(), &train.targets(), low_by_name[lk].clone(), &cfg)?;
                Ok(Box::new(crate::piml::Predictor::Cokriging(m)) as Box<dyn Model>)
            },
        )?;
        failures.extend(out.failures.iter().cloned());
        let mut rows = Vec::new();
        for lk in KernelKind::ALL {
            for dk in KernelKind::ALL {
                let label = format!("{}/{}", lk.name(), dk.name());
                let r = out.rows.iter().find(|r| r.method == label);
                rows.push(KernelRow {
                    kernel_low: lk.name().into(),
                    kernel_delta: dk.name().into(),
                    q_cell: r.map(|r| r.q_cell),
                    m_p: r.map(|r| r.m_p),
                    m_n: r.map(|r| r.m_n),
                    lii: r.map(|r| r.lii),
                });
            }
        }
        Ok((rows, failures))
    }

    /// Whole-life predictions and bubble scores of the designated cell,
    /// taken from a finished comparison run.
    pub fn extrapolation(&self, cv: &CvOutcome) -> Result<Vec<TrajectoryRow>> {
        let cell = self.eval.designated_cell;
        let fold = self
            .plan
            .folds
            .iter()
            .position(|f| f.test_cells.contains(&cell))
            .ok_or_else(|| invalid(format!("designated cell {cell} is not in any test fold")))?;
        let test = cells(&self.bench.exp, &self.plan.folds[fold].test_cells);
        let mut idx: Vec<usize> = (0..test.len()).filter(|&i| test.records[i].cell_id == cell).collect();
        idx.sort_by_key(|&i| test.records[i].rpt_index);
        let truth = test.targets();
        let mut rows = Vec::new();
        for p in cv.predictions.iter().filter(|p| p.fold == fold) {
            for &i in &idx {
                let r = &test.records[i];
                let (y, yh) = (truth.row(i), p.pred.row(i));
                rows.push(TrajectoryRow {
                    cell_id: cell,
                    rpt_index: r.rpt_index,
                    stage: r.stage.as_str().into(),
                    method: p.label.clone(),
                    repeat: p.repeat,
                    q_cell_true: y[0],
                    q_cell_pred: yh[0],
                    m_p_true: y[1],
                    m_p_pred: yh[1],
                    m_n_true: y[2],
                    m_n_pred: yh[2],
                    lii_true: y[3],
                    lii_pred: yh[3],
                    bubble: bubble_score(yh, y, self.eval.bubble_c1, self.eval.bubble_c2),
                });
            }
        }
        Ok(rows)
    }

    /// Single-start half-cell fits against truth and the PINN estimate on the
    /// last RPT of each fitting cell.
    pub fn fitting_comparison(&self, cv: Option<&CvOutcome>) -> Result<Vec<FittingRow>> {
        let mut rows = Vec::new();
        for &cell in &self.eval.fitting_cells {
            let rec = self
                .bench
                .exp
                .records
                .iter()
                .filter(|r| r.cell_id == cell)
                .max_by_key(|r| r.rpt_index)
                .ok_or_else(|| invalid(format!("fitting cell {cell} has no records")))?;
            let curve = reconstruct_ocv(&self.bench.pair, &rec.params, self.bench.window, 200)?;
            let row = |source: String, m_p: f64, m_n: f64| FittingRow {
                cell_id: cell,
                rpt_index: rec.rpt_index,
                source,
                m_p,
                m_n,
            };
            rows.push(row("truth".into(), rec.params.m_p, rec.params.m_n));
            let runs: Vec<u64> = (0..self.eval.fitting_runs as u64).collect();
            let fits = self.exec.map(&runs, |&k| {
                let opts = FitOptions {
                    starts: 1,
                    seed: self.eval.seed.wrapping_add(k),
                    execution: Execution::Sequential,
                    ..Default::default()
                };
                fit_halfcell_auto(&self.bench.pair, &curve, &opts).map(|(p, _)| p)
            });
            for (k, f) in fits.into_iter().enumerate() {
                let p = f?;
                rows.push(row(format!("fit_run_{}", k + 1), p.m_p, p.m_n));
            }
            if let Some(cv) = cv {
                if let Some(fold) = self.plan.folds.iter().position(|f| f.test_cells.contains(&cell)) {
                    let test = cells(&self.bench.exp, &self.plan.folds[fold].test_cells);
                    let i = test.records.iter().position(|r| r.key() == rec.key()).expect("cell is in its test fold");
                    if let Some(p) =
                        cv.predictions.iter().find(|p| p.label == "pinn" && p.fold == fold && p.repeat == 0)
                    {
                        rows.push(row("pinn".into(), p.pred[(i, 1)], p.pred[(i, 2)]));
                    }
                }
            }
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSizeRow {
    pub method: String,
    pub points_per_cell: usize,
    pub n_exp: usize,
    pub repeat: usize,
    pub q_cell: f64,
    pub m_p: f64,
    pub m_n: f64,
    pub lii: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeightRow {
    /// Loss term whose ratio is varied (1-based).
    pub term: usize,
    pub ratio: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub repeat: usize,
    pub q_cell: f64,
    pub m_p: f64,
    pub m_n: f64,
    pub lii: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub kernel_low: String,
    pub kernel_delta: String,
    pub q_cell: Option<f64>,
    pub m_p: Option<f64>,
    pub m_n: Option<f64>,
    pub lii: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub cell_id: u32,
    pub rpt_index: u32,
    pub stage: String,
    pub method: String,
    pub repeat: usize,
    pub q_cell_true: f64,
    pub q_cell_pred: f64,
    pub m_p_true: f64,
    pub m_p_pred: f64,
    pub m_n_true: f64,
    pub m_n_pred: f64,
    pub lii_true: f64,
    pub lii_pred: f64,
    pub bubble: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittingRow {
    pub cell_id: u32,
    pub rpt_index: u32,
    /// `truth`, `fit_run_<k>`, or `pinn`.
    pub source: String,
    pub m_p: f64,
    pub m_n: f64,
}

/// Outcome of one directional comparison between a physics-informed method
/// and its baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalRow {
    pub method: String,
    pub baseline: String,
    pub parameter: String,
    pub value: f64,
    /// Baseline mean + 2 std.
    pub bound: f64,
    pub pass: bool,
}

/// (term, ratio, effective ratios) for every term (1-based) and ratio value.
pub fn loss_ratio_grid(ratios: &[f64]) -> Result<Vec<(usize, f64, [f64; 3])>> {
    let mut grid = Vec::new();
    for term in 0..3 {
        for &r in ratios {
            grid.push((term + 1, r, LossWeights::one_varied(term, r)?.ratios()));
        }
    }
    Ok(grid)
}

pub const PARAMETERS: [&str; 4] = ["q_cell", "m_p", "m_n", "lii"];

/// Mean RMSPE of every physics-informed method against its baseline's
/// mean + 2 std, per health parameter.
pub fn directional_checks(summary: &[SummaryRow]) -> Vec<DirectionalRow> {
    let find = |name: &str| summary.iter().find(|s| s.method == name);
    let mut out = Vec::new();
    for m in Method::ALL.into_iter().filter(|m| m.is_physics_informed()) {
        let (Some(s), Some(b)) = (find(m.name()), find(m.baseline().name())) else { continue };
        for k in 0..4 {
            let bound = b.mean()[k] + 2.0 * b.std()[k];
            out.push(DirectionalRow {
                method: m.name().into(),
                baseline: m.baseline().name().into(),
                parameter: PARAMETERS[k].into(),
                value: s.mean()[k],
                bound,
                pass: s.mean()[k] <= bound,
            });
        }
    }
    out
}

/// Mean late-life bubble score per method over all repeats.
pub fn late_bubble_means(rows: &[TrajectoryRow]) -> BTreeMap<String, f64> {
    let mut by: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.stage == Stage::Late.as_str()) {
        by.entry(r.method.clone()).or_default().push(r.bubble);
    }
    by.into_iter().map(|(k, v)| (k, mean_std(&v).0)).collect()
}
