//! Cross-validation engine: trains labelled model variants on every split,
//! predicts the held-out cells, and pools RMSPE per repeat.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{mean_std, near_zero_rows, pooled_rmspe};
use crate::datagen::{LabeledDataset, Stage};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::Matrix;
use crate::sampling::stream;

/// Anything that maps feature rows to the four health parameters.
pub trait Model: Send + Sync {
    fn predict(&self, x: &Matrix) -> Matrix;
    /// Training rows the model saw.
    fn exposure(&self) -> usize;
}

impl Model for crate::piml::Predictor {
    fn predict(&self, x: &Matrix) -> Matrix {
        crate::piml::Predictor::predict(self, x)
    }

    fn exposure(&self) -> usize {
        crate::piml::Predictor::exposure(self)
    }
}

/// Training rows and held-out rows of one fold.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: LabeledDataset,
    /// All records of the held-out cells; only late-life rows are scored.
    pub test: LabeledDataset,
}

/// One labelled model variant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variant {
    pub label: String,
    /// Retrained for every repeat when true; otherwise trained once per fold.
    pub stochastic: bool,
}

/// Predictions of one (variant, repeat, fold).
#[derive(Debug, Clone)]
pub struct FoldPrediction {
    pub label: String,
    pub repeat: usize,
    pub fold: usize,
    pub exposure: usize,
    pub pred: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmspeRow {
    pub method: String,
    pub repeat: usize,
    pub q_cell: f64,
    pub m_p: f64,
    pub m_n: f64,
    pub lii: f64,
}

impl RmspeRow {
    pub fn values(&self) -> [f64; 4] {
        [self.q_cell, self.m_p, self.m_n, self.lii]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub repeats: usize,
    pub q_cell_mean: f64,
    pub q_cell_std: f64,
    pub m_p_mean: f64,
    pub m_p_std: f64,
    pub m_n_mean: f64,
    pub m_n_std: f64,
    pub lii_mean: f64,
    pub lii_std: f64,
}

impl SummaryRow {
    pub fn mean(&self) -> [f64; 4] {
        [self.q_cell_mean, self.m_p_mean, self.m_n_mean, self.lii_mean]
    }

    pub fn std(&self) -> [f64; 4] {
        [self.q_cell_std, self.m_p_std, self.m_n_std, self.lii_std]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub analysis: String,
    pub method: String,
    pub repeat: usize,
    pub fold: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct CvOutcome {
    pub predictions: Vec<FoldPrediction>,
    pub rows: Vec<RmspeRow>,
    pub failures: Vec<FailureRow>,
    /// Late-life test rows left out of RMSPE for near-zero truth.
    pub excluded: usize,
}

impl CvOutcome {
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut by: BTreeMap<&str, Vec<[f64; 4]>> = BTreeMap::new();
        let mut order = Vec::new();
        for r in &self.rows {
            if !by.contains_key(r.method.as_str()) {
                order.push(r.method.as_str());
            }
            by.entry(&r.method).or_default().push(r.values());
        }
        order
            .into_iter()
            .map(|m| {
                let v = &by[m];
                let s: Vec<(f64, f64)> =
                    (0..4).map(|k| mean_std(&v.iter().map(|r| r[k]).collect::<Vec<_>>())).collect();
                SummaryRow {
                    method: m.to_string(),
                    repeats: v.len(),
                    q_cell_mean: s[0].0,
                    q_cell_std: s[0].1,
                    m_p_mean: s[1].0,
                    m_p_std: s[1].1,
                    m_n_mean: s[2].0,
                    m_n_std: s[2].1,
                    lii_mean: s[3].0,
                    lii_std: s[3].1,
                }
            })
            .collect()
    }

    /// Exposure of `label` on `fold` in the first repeat that trained.
    pub fn exposure(&self, label: &str, fold: usize) -> Option<usize> {
        self.predictions.iter().find(|p| p.label == label && p.fold == fold).map(|p| p.exposure)
    }
}

/// Seed of a training job; identical for every variant so paired variants
/// share initialization and batching.
pub fn job_seed(seed: u64, repeat: usize, fold: usize) -> u64 {
    stream(seed, &[6, repeat as u64, fold as u64]).random()
}

/// Checks that no held-out cell contributes a training row.
pub fn check_leakage(splits: &[Split]) -> Result<()> {
    for (f, s) in splits.iter().enumerate() {
        let test: HashSet<u32> = s.test.records.iter().map(|r| r.cell_id).collect();
        let test_keys: HashSet<_> = s.test.records.iter().map(|r| r.key()).collect();
        if let Some(r) = s.train.records.iter().find(|r| test.contains(&r.cell_id) || test_keys.contains(&r.key())) {
            return Err(Error::Validation(format!("fold {f}: training record {:?} belongs to a test cell", r.key())));
        }
    }
    Ok(())
}

struct Job {
    variant: usize,
    repeat: usize,
    fold: usize,
}

/// Runs every variant over every split and repeat. `fit` receives the
/// variant label, the training rows and the job seed.
pub fn cross_validate<F>(
    analysis: &str,
    splits: &[Split],
    variants: &[Variant],
    repeats: usize,
    seed: u64,
    reference: &[f64; 4],
    exec: Execution,
    fit: F,
) -> Result<CvOutcome>
where
    F: Fn(&str, &LabeledDataset, u64) -> Result<Box<dyn Model>> + Sync + Send,
{
    check_leakage(splits)?;
    let repeats = repeats.max(1);
    let mut jobs = Vec::new();
    for (v, var) in variants.iter().enumerate() {
        for repeat in 0..if var.stochastic { repeats } else { 1 } {
            for fold in 0..splits.len() {
                jobs.push(Job { variant: v, repeat, fold });
            }
        }
    }
    let results = exec.map(&jobs, |j| {
        let split = &splits[j.fold];
        let model = fit(&variants[j.variant].label, &split.train, job_seed(seed, j.repeat, j.fold))?;
        Ok::<_, Error>((model.predict(&split.test.features()), model.exposure()))
    });

    let mut out = CvOutcome::default();
    let mut store: BTreeMap<(usize, usize, usize), (Matrix, usize)> = BTreeMap::new();
    for (j, r) in jobs.iter().zip(results) {
        match r {
            Ok(p) => {
                store.insert((j.variant, j.repeat, j.fold), p);
            }
            Err(e) => out.failures.push(FailureRow {
                analysis: analysis.to_string(),
                method: variants[j.variant].label.clone(),
                repeat: j.repeat,
                fold: j.fold,
                error: e.to_string(),
            }),
        }
    }

    // Late-life rows with non-negligible truth, per fold.
    let scored: Vec<Vec<usize>> = splits
        .iter()
        .map(|s| {
            let truth = s.test.targets();
            let tiny: HashSet<usize> = near_zero_rows(&truth, reference).into_iter().collect();
            (0..s.test.len()).filter(|i| s.test.records[*i].stage == Stage::Late && !tiny.contains(i)).collect()
        })
        .collect();
    out.excluded = splits
        .iter()
        .zip(&scored)
        .map(|(s, k)| s.test.records.iter().filter(|r| r.stage == Stage::Late).count() - k.len())
        .sum();

    for (v, var) in variants.iter().enumerate() {
        for repeat in 0..repeats {
            let trained = if var.stochastic { repeat } else { 0 };
            let folds: Option<Vec<(Matrix, Matrix)>> = (0..splits.len())
                .map(|f| {
                    store
                        .get(&(v, trained, f))
                        .map(|(p, _)| (p.select_rows(&scored[f]), splits[f].test.targets().select_rows(&scored[f])))
                })
                .collect();
            let Some(folds) = folds else { continue };
            let r = pooled_rmspe(&folds)?;
            out.rows.push(RmspeRow {
                method: var.label.clone(),
                repeat,
                q_cell: r[0],
                m_p: r[1],
                m_n: r[2],
                lii: r[3],
            });
        }
    }
    for ((v, repeat, fold), (pred, exposure)) in store {
        out.predictions.push(FoldPrediction { label: variants[v].label.clone(), repeat, fold, exposure, pred });
    }
    Ok(out)
}
