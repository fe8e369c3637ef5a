//! CSV and SVG output of an evaluation run plus its JSON manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::analyses::{
    directional_checks, late_bubble_means, Analysis, EvalConfig, FittingRow, Harness, KernelRow, LossWeightRow,
    TrainingSizeRow, TrajectoryRow, PARAMETERS,
};
use super::cv::{check_leakage, CvOutcome, FailureRow, SummaryRow};
use super::metrics::mean_std;
use super::svg;
use crate::datagen::{Benchmark, Fold};
use crate::error::Result;
use crate::exec::Execution;
use crate::piml::{Method, MethodConfig, SurrogateReport};

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Hex SHA-256 of the JSON form of `value`.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("serializable value");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "error", rename_all = "snake_case")]
pub enum AnalysisStatus {
    Ok,
    Skipped,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub folds: Vec<Fold>,
    pub n_experimental: usize,
    pub n_simulation: usize,
    pub n_simulation_top: usize,
    /// Expected training rows per method on the first fold (experimental + simulation).
    pub train_counts: BTreeMap<String, usize>,
    /// Rows each trained model actually saw on the first fold.
    pub exposures: BTreeMap<String, usize>,
    pub leakage_free: bool,
    /// Scored rows dropped because a true value was near zero.
    pub excluded_rows: usize,
    pub failures: usize,
    pub analyses: BTreeMap<String, AnalysisStatus>,
    pub surrogate: Option<SurrogateReport>,
    pub late_bubble: BTreeMap<String, f64>,
    pub directional_pass: Option<bool>,
}

impl Manifest {
    pub fn any_failed(&self) -> bool {
        self.analyses.values().any(|s| matches!(s, AnalysisStatus::Failed(_)))
    }
}

fn write_svg(dir: &Path, name: &str, body: String) -> Result<()> {
    fs::write(dir.join(name), body)?;
    Ok(())
}

fn rmspe_plot(summary: &[SummaryRow]) -> String {
    let series: Vec<(String, Vec<f64>, Vec<f64>)> =
        summary.iter().map(|s| (s.method.clone(), s.mean().to_vec(), s.std().to_vec())).collect();
    svg::grouped_bars("RMSPE by method", "RMSPE (%)", &PARAMETERS, &series)
}

/// Mean of `value` grouped by (series, x), one line chart per parameter.
fn sweep_plots<R>(
    dir: &Path,
    prefix: &str,
    title: &str,
    x_label: &str,
    rows: &[R],
    key: impl Fn(&R) -> (String, f64),
    values: impl Fn(&R) -> [f64; 4],
) -> Result<()> {
    for (k, p) in PARAMETERS.iter().enumerate() {
        let mut groups: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
        for r in rows {
            let (s, x) = key(r);
            groups.entry(s).or_default().entry(x.to_bits()).or_default().push(values(r)[k]);
        }
        let series: Vec<(String, Vec<(f64, f64)>)> = groups
            .into_iter()
            .map(|(s, xs)| {
                let mut pts: Vec<(f64, f64)> =
                    xs.into_iter().map(|(x, v)| (f64::from_bits(x), mean_std(&v).0)).collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                (s, pts)
            })
            .collect();
        write_svg(
            dir,
            &format!("{prefix}_{p}.svg"),
            svg::lines(&format!("{title}: {p}"), x_label, "RMSPE (%)", &series),
        )?;
    }
    Ok(())
}

fn trajectory_plots(dir: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    let pick = |r: &TrajectoryRow| -> [(f64, f64); 4] {
        [(r.q_cell_true, r.q_cell_pred), (r.m_p_true, r.m_p_pred), (r.m_n_true, r.m_n_pred), (r.lii_true, r.lii_pred)]
    };
    for (k, p) in PARAMETERS.iter().enumerate() {
        let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.repeat == 0) {
            let x = r.rpt_index as f64;
            let (t, y) = pick(r)[k];
            let truth = series.entry("truth".into()).or_default();
            if !truth.iter().any(|q| q.0 == x) {
                truth.push((x, t));
            }
            series.entry(r.method.clone()).or_default().push((x, y));
        }
        let series: Vec<_> = series
            .into_iter()
            .map(|(s, mut v)| {
                v.sort_by(|a, b| a.0.total_cmp(&b.0));
                (s, v)
            })
            .collect();
        write_svg(
            dir,
            &format!("trajectory_{p}.svg"),
            svg::lines(&format!("Trajectory: {p}"), "RPT index", p, &series),
        )?;
    }
    Ok(())
}

fn kernel_plots(dir: &Path, rows: &[KernelRow]) -> Result<()> {
    let mut low: Vec<&str> = Vec::new();
    let mut delta: Vec<&str> = Vec::new();
    for r in rows {
        if !low.contains(&r.kernel_low.as_str()) {
            low.push(&r.kernel_low);
        }
        if !delta.contains(&r.kernel_delta.as_str()) {
            delta.push(&r.kernel_delta);
        }
    }
    for (k, p) in PARAMETERS.iter().enumerate() {
        let grid: Vec<Vec<Option<f64>>> = low
            .iter()
            .map(|l| {
                delta
                    .iter()
                    .map(|d| {
                        rows.iter()
                            .find(|r| r.kernel_low == *l && r.kernel_delta == *d)
                            .and_then(|r| [r.q_cell, r.m_p, r.m_n, r.lii][k])
                    })
                    .collect()
            })
            .collect();
        write_svg(
            dir,
            &format!("kernels_{p}.svg"),
            svg::heatmap(&format!("Kernel pairs: {p} RMSPE (%)"), &low, &delta, &grid),
        )?;
    }
    Ok(())
}

fn fitting_plot(rows: &[FittingRow]) -> String {
    let cats: Vec<String> = {
        let mut c: Vec<String> = Vec::new();
        for r in rows {
            let label = format!("cell {} m_p", r.cell_id);
            if !c.contains(&label) {
                c.push(label);
                c.push(format!("cell {} m_n", r.cell_id));
            }
        }
        c
    };
    let mut sources: Vec<String> = Vec::new();
    for r in rows {
        if !sources.contains(&r.source) {
            sources.push(r.source.clone());
        }
    }
    let series: Vec<(String, Vec<f64>, Vec<f64>)> = sources
        .iter()
        .map(|s| {
            let mut v = vec![f64::NAN; cats.len()];
            for r in rows.iter().filter(|r| &r.source == s) {
                if let Some(i) = cats.iter().position(|c| *c == format!("cell {} m_p", r.cell_id)) {
                    v[i] = r.m_p;
                    v[i + 1] = r.m_n;
                }
            }
            (s.clone(), v, vec![0.0; cats.len()])
        })
        .collect();
    let refs: Vec<&str> = cats.iter().map(String::as_str).collect();
    svg::grouped_bars("Active masses: fits vs truth", "mass", &refs, &series)
}

fn status<T>(r: &Result<T>) -> AnalysisStatus {
    match r {
        Ok(_) => AnalysisStatus::Ok,
        Err(e) => AnalysisStatus::Failed(e.to_string()),
    }
}

/// Runs the configured analyses and writes every table, plot, and the
/// manifest under `out_dir`. A failing analysis is recorded in the manifest;
/// the others still run.
pub fn run_evaluation(
    bench: &Benchmark,
    methods: &MethodConfig,
    eval: &EvalConfig,
    out_dir: &Path,
    config_hash: &str,
    exec: Execution,
) -> Result<Manifest> {
    let h = Harness::new(bench, methods, eval, exec)?;
    let plots = out_dir.join("plots");
    fs::create_dir_all(&plots)?;
    let mut analyses: BTreeMap<String, AnalysisStatus> =
        Analysis::ALL.iter().map(|a| (a.name().to_string(), AnalysisStatus::Skipped)).collect();
    let mut failures: Vec<FailureRow> = Vec::new();

    let n_train = h.plan.train(&bench.exp, 0).len();
    let train_counts: BTreeMap<String, usize> = eval
        .methods
        .iter()
        .map(|m| {
            let (e, s) = m.composition(n_train, bench.sim.len(), bench.sim_top.len(), methods.augment_full_grid);
            (m.name().to_string(), e + s)
        })
        .collect();
    let leakage_free = check_leakage(&h.splits(&bench.exp)).is_ok();

    let need_cv = eval.wants(Analysis::Cv) || eval.wants(Analysis::Extrapolation);
    let cv: Option<CvOutcome> = if need_cv {
        let r = h.run_cv();
        if eval.wants(Analysis::Cv) {
            analyses.insert(Analysis::Cv.name().into(), status(&r));
        }
        match r {
            Ok(cv) => Some(cv),
            Err(e) => {
                if eval.wants(Analysis::Extrapolation) {
                    analyses.insert(Analysis::Extrapolation.name().into(), AnalysisStatus::Failed(e.to_string()));
                }
                None
            }
        }
    } else {
        None
    };

    let mut exposures = BTreeMap::new();
    let mut excluded_rows = 0;
    let mut directional_pass = None;
    if let Some(cv) = &cv {
        excluded_rows = cv.excluded;
        failures.extend(cv.failures.iter().cloned());
        for m in &eval.methods {
            if let Some(n) = cv.exposure(m.name(), 0) {
                exposures.insert(m.name().to_string(), n);
            }
        }
        let summary = cv.summary();
        write_rows(&out_dir.join("rmspe.csv"), &cv.rows)?;
        write_rows(&out_dir.join("rmspe_summary.csv"), &summary)?;
        let directional = directional_checks(&summary);
        if !directional.is_empty() {
            directional_pass = Some(directional.iter().all(|d| d.pass));
        }
        write_rows(&out_dir.join("directional.csv"), &directional)?;
        write_svg(&plots, "rmspe.svg", rmspe_plot(&summary))?;
    }

    let mut late_bubble = BTreeMap::new();
    if let (true, Some(cv)) = (eval.wants(Analysis::Extrapolation), &cv) {
        let r = h.extrapolation(cv);
        analyses.insert(Analysis::Extrapolation.name().into(), status(&r));
        if let Ok(rows) = r {
            let dir = out_dir.join("trajectories");
            fs::create_dir_all(&dir)?;
            write_rows(&dir.join(format!("cell_{}.csv", eval.designated_cell)), &rows)?;
            late_bubble = late_bubble_means(&rows);
            trajectory_plots(&plots, &rows)?;
        }
    }

    if eval.wants(Analysis::TrainingSize) {
        let r = h.training_size_sweep();
        analyses.insert(Analysis::TrainingSize.name().into(), status(&r));
        if let Ok((rows, f)) = r {
            failures.extend(f);
            write_rows(&out_dir.join("sweep_training_size.csv"), &rows)?;
            sweep_plots(
                &plots,
                "training_size",
                "Training size",
                "early-life points per cell",
                &rows,
                |r: &TrainingSizeRow| (r.method.clone(), r.points_per_cell as f64),
                |r| [r.q_cell, r.m_p, r.m_n, r.lii],
            )?;
        }
    }

    if eval.wants(Analysis::LossWeights) {
        let r = h.loss_weight_sensitivity();
        analyses.insert(Analysis::LossWeights.name().into(), status(&r));
        if let Ok((rows, f)) = r {
            failures.extend(f);
            write_rows(&out_dir.join("sweep_loss_weights.csv"), &rows)?;
            sweep_plots(
                &plots,
                "loss_weights",
                "Loss weights",
                "ratio of the varied term",
                &rows,
                |r: &LossWeightRow| (format!("term {}", r.term), r.ratio),
                |r| [r.q_cell, r.m_p, r.m_n, r.lii],
            )?;
        }
    }

    if eval.wants(Analysis::Kernels) {
        let r = h.kernel_sensitivity();
        analyses.insert(Analysis::Kernels.name().into(), status(&r));
        if let Ok((rows, f)) = r {
            failures.extend(f);
            write_rows(&out_dir.join("sweep_kernels.csv"), &rows)?;
            kernel_plots(&plots, &rows)?;
        }
    }

    if eval.wants(Analysis::Fitting) {
        let r = h.fitting_comparison(cv.as_ref());
        analyses.insert(Analysis::Fitting.name().into(), status(&r));
        if let Ok(rows) = r {
            write_rows(&out_dir.join("fitting_comparison.csv"), &rows)?;
            write_svg(&plots, "fitting.svg", fitting_plot(&rows))?;
        }
    }

    write_rows(&out_dir.join("failures.csv"), &failures)?;
    let manifest = Manifest {
        config_hash: config_hash.to_string(),
        seed: eval.seed,
        folds: h.plan.folds.clone(),
        n_experimental: bench.exp.len(),
        n_simulation: bench.sim.len(),
        n_simulation_top: bench.sim_top.len(),
        train_counts,
        exposures,
        leakage_free,
        excluded_rows,
        failures: failures.len(),
        analyses,
        surrogate: h.shared.surrogate_report(),
        late_bubble,
        directional_pass,
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Headline line for the training composition of `method`.
pub fn composition_line(method: Method, n_exp: usize, n_sim: usize, n_top: usize, augment_full: bool) -> String {
    let (e, s) = method.composition(n_exp, n_sim, n_top, augment_full);
    if s == 0 {
        format!("train rows: {e}")
    } else {
        format!("train rows: {e} exp + {s} sim = {}", e + s)
    }
}
