//! Physics-informed network: a dQ/dV → half-cell-parameter net trained with
//! a parameter loss plus two terms routed through the half-cell surrogate.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::surrogate::SurrogateHc;
use crate::datagen::{evaluate_sample, LabeledDataset};
use crate::electrode::ElectrodePair;
use crate::error::{invalid, Result};
use crate::halfcell::{health_params, HalfCellParams, HealthParams, PeakConfig, VoltageWindow};
use crate::learners::autodiff::{Tape, Var};
use crate::learners::{net_train, Activation, DenseNet, LossFn, Standardizer, TrainControl, TrainHistory};
use crate::linalg::Matrix;

pub const NET_LAYERS: [usize; 4] = [100, 60, 60, 4];

/// Weights `(w1, w2, w3)` of the three loss terms. `L = w1·L1 + w2·L2 + w3·L3`;
/// the usual `L1 + λ1·L2 + λ2·L3` form is `w = (1, λ1, λ2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w: [f64; 3],
}

impl LossWeights {
    pub fn from_lambdas(lambda1: f64, lambda2: f64) -> Self {
        Self { w: [1.0, lambda1, lambda2] }
    }

    /// Ratios must be non-negative with a positive sum; they are normalized.
    pub fn from_ratios(r: [f64; 3]) -> Result<Self> {
        if r.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid(format!("loss ratios must be non-negative, got {r:?}")));
        }
        let s: f64 = r.iter().sum();
        if !(s > 0.0) {
            return Err(invalid("loss ratios must not all be zero"));
        }
        Ok(Self { w: r.map(|v| v / s) })
    }

    /// `r_i = w_i / Σw`.
    pub fn ratios(&self) -> [f64; 3] {
        let s: f64 = self.w.iter().sum();
        self.w.map(|v| v / s)
    }

    /// `(λ1, λ2)`; undefined when the parameter term has zero weight.
    pub fn lambdas(&self) -> Option<(f64, f64)> {
        (self.w[0] > 0.0).then(|| (self.w[1] / self.w[0], self.w[2] / self.w[0]))
    }

    /// Ratio `r` on `term` (0-based) with the remainder split evenly.
    pub fn one_varied(term: usize, r: f64) -> Result<Self> {
        if term > 2 || !(0.0..=1.0).contains(&r) {
            return Err(invalid(format!("term {term} ratio {r} out of range")));
        }
        let mut w = [(1.0 - r) / 2.0; 3];
        w[term] = r;
        Self::from_ratios(w)
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { w: [1.0 / 3.0; 3] }
    }
}

/// Per-row truth for the three loss terms.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnTargets {
    /// Half-cell parameters (m_p, m_n, δ_p, δ_n).
    pub theta: Matrix,
    /// (q_cell, lii).
    pub health: Matrix,
    /// Top-two peak voltages of the row's noise-free curve, ascending.
    pub peaks: Matrix,
    /// False where the noise-free curve had fewer than two peaks.
    pub has_peaks: Vec<bool>,
}

impl PinnTargets {
    pub fn from_dataset(ds: &LabeledDataset, pair: &ElectrodePair, peaks: &PeakConfig) -> Self {
        let n = ds.len();
        let mut p = Matrix::zeros(n, 2);
        let mut has = vec![false; n];
        for (i, r) in ds.records.iter().enumerate() {
            if let Ok(s) = evaluate_sample(pair, &r.params, ds.window, peaks) {
                p[(i, 0)] = s.peaks[0];
                p[(i, 1)] = s.peaks[1];
                has[i] = true;
            }
        }
        Self {
            theta: ds.halfcell_targets(),
            health: Matrix::from_rows(&ds.records.iter().map(|r| [r.truth.q_cell, r.truth.lii]).collect::<Vec<_>>()),
            peaks: p,
            has_peaks: has,
        }
    }
}

/// The composite loss on the core net's standardized output.
pub struct PinnLoss<'a> {
    surrogate: &'a SurrogateHc,
    weights: LossWeights,
    /// Core-net standardized output → surrogate standardized input.
    scale: Vec<f64>,
    shift: Vec<f64>,
    health_std: Matrix,
    peaks_std: Matrix,
    mask: Matrix,
}

impl<'a> PinnLoss<'a> {
    pub fn new(surrogate: &'a SurrogateHc, targets: &PinnTargets, weights: LossWeights) -> Self {
        let theta = Standardizer::fit(&targets.theta);
        let s_in = &surrogate.net.x_stats;
        let scale: Vec<f64> = (0..4).map(|j| theta.scale[j] / s_in.scale[j]).collect();
        let shift: Vec<f64> = (0..4).map(|j| (theta.mean[j] - s_in.mean[j]) / s_in.scale[j]).collect();
        let s_out = &surrogate.net.y_stats;
        let n = targets.theta.rows();
        let mut health_std = Matrix::zeros(n, 2);
        let mut peaks_std = Matrix::zeros(n, 2);
        let mut mask = Matrix::zeros(n, 2);
        for i in 0..n {
            for k in 0..2 {
                health_std[(i, k)] = (targets.health[(i, k)] - s_out.mean[k]) / s_out.scale[k];
                peaks_std[(i, k)] = (targets.peaks[(i, k)] - s_out.mean[k + 2]) / s_out.scale[k + 2];
                mask[(i, k)] = if targets.has_peaks[i] { 1.0 } else { 0.0 };
            }
        }
        Self { surrogate, weights, scale, shift, health_std, peaks_std, mask }
    }

    /// (L1, L2, L3, L_total) nodes.
    pub fn terms(&self, tape: &mut Tape, output: Var, targets: &Matrix, rows: &[usize]) -> [Var; 4] {
        let l1 = tape.mse(output, targets);
        let s_in = tape.col_affine(output, &self.scale, &self.shift);
        let s_out = self.surrogate.net.tape_forward(tape, s_in, false);
        let u = tape.select_cols(s_out, &[0, 1]);
        let v = tape.select_cols(s_out, &[2, 3]);
        let l2 = tape.mse(u, &self.health_std.select_rows(rows));
        let l3 = tape.masked_mse(v, &self.peaks_std.select_rows(rows), &self.mask.select_rows(rows));
        let w = self.weights.w;
        let total = tape.weighted_sum(&[(l1, w[0]), (l2, w[1]), (l3, w[2])]);
        [l1, l2, l3, total]
    }
}

impl LossFn for PinnLoss<'_> {
    fn loss(&self, tape: &mut Tape, output: Var, targets: &Matrix, rows: &[usize]) -> Var {
        self.terms(tape, output, targets, rows)[3]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PinnModel {
    /// dQ/dV → (m_p, m_n, δ_p, δ_n).
    pub net: DenseNet,
    pub surrogate: Arc<SurrogateHc>,
    pub pair: Arc<ElectrodePair>,
    pub window: VoltageWindow,
    pub weights: LossWeights,
    pub history: TrainHistory,
}

impl PinnModel {
    pub fn predict_params(&self, x: &Matrix) -> Vec<HalfCellParams> {
        let out = self.net.predict(x);
        (0..out.rows())
            .map(|i| HalfCellParams::from_array([out[(i, 0)], out[(i, 1)], out[(i, 2)], out[(i, 3)]]))
            .collect()
    }

    /// Health parameters through the exact half-cell model. Rows whose
    /// predicted parameters are infeasible fall back to the surrogate for
    /// capacity and lithium inventory; their indices are returned.
    pub fn predict(&self, x: &Matrix) -> (Matrix, Vec<usize>) {
        let params = self.predict_params(x);
        let mut out = Matrix::zeros(params.len(), 4);
        let mut fallback = Vec::new();
        for (i, p) in params.iter().enumerate() {
            let h = match health_params(&self.pair, p, self.window) {
                Ok(h) => h,
                Err(_) => {
                    fallback.push(i);
                    let s = self.surrogate.predict(std::slice::from_ref(p));
                    HealthParams { q_cell: s[(0, 0)], m_p: p.m_p, m_n: p.m_n, lii: s[(0, 1)] }
                }
            };
            out.row_mut(i).copy_from_slice(&h.to_array());
        }
        (out, fallback)
    }
}

/// Trains the core network on `train` (early experimental plus filtered
/// simulation rows).
pub fn train_pinn(
    train: &LabeledDataset,
    pair: Arc<ElectrodePair>,
    surrogate: Arc<SurrogateHc>,
    weights: LossWeights,
    control: &TrainControl,
) -> Result<PinnModel> {
    if train.is_empty() {
        return Err(invalid("PINN training set is empty"));
    }
    let targets = PinnTargets::from_dataset(train, &pair, &PeakConfig::default());
    let loss = PinnLoss::new(&surrogate, &targets, weights);
    let net = DenseNet::new(&NET_LAYERS, Activation::Relu, control.seed)?;
    let (net, history) = net_train(net, &train.features(), &targets.theta, &loss, control)?;
    Ok(PinnModel { net, surrogate: surrogate.clone(), pair, window: train.window, weights, history })
}
