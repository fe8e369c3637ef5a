//! Elastic net by cyclic coordinate descent with soft-thresholding.

use serde::{Deserialize, Serialize};

use super::Standardizer;
use crate::error::{invalid, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnetControl {
    /// Converged when the largest coordinate update falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for EnetControl {
    fn default() -> Self {
        Self { tol: 1e-7, max_sweeps: 10_000 }
    }
}

/// Minimizer of `(1/2N)‖y − Xw − b‖² + α(ρ‖w‖₁ + (1−ρ)/2 ‖w‖²)` with `X`
/// standardized per column and `y` standardized, `ρ` the l1 ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetModel {
    /// Weights on standardized features, in standardized target units.
    pub weights: Vec<f64>,
    pub alpha: f64,
    pub l1_ratio: f64,
    pub x_stats: Standardizer,
    pub y_mean: f64,
    pub y_scale: f64,
    pub converged: bool,
    pub sweeps: usize,
    #[serde(default)]
    pub n_rows: usize,
    /// Objective after every sweep.
    #[serde(skip)]
    pub objective_history: Vec<f64>,
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

pub fn enet_fit(x: &Matrix, y: &[f64], alpha: f64, l1_ratio: f64, control: &EnetControl) -> Result<ElasticNetModel> {
    let (n, p) = (x.rows(), x.cols());
    if n < 2 {
        return Err(invalid("elastic net needs at least two rows"));
    }
    if y.len() != n {
        return Err(invalid(format!("elastic net has {n} rows but {} targets", y.len())));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(invalid("elastic net training data must be finite"));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(invalid(format!("alpha must be non-negative, got {alpha}")));
    }
    if !(0.0..=1.0).contains(&l1_ratio) {
        return Err(invalid(format!("l1_ratio must lie in [0, 1], got {l1_ratio}")));
    }
    let x_stats = Standardizer::fit(x);
    let xs = x_stats.transform(x);
    let y_stats = Standardizer::fit_vec(y);
    let ys: Vec<f64> = y.iter().map(|v| (v - y_stats.mean[0]) / y_stats.scale[0]).collect();

    // Column-major copy for the inner loops.
    let cols: Vec<Vec<f64>> = (0..p).map(|j| xs.column(j)).collect();
    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    let nf = n as f64;
    let l1 = nf * alpha * l1_ratio;
    let l2 = nf * alpha * (1.0 - l1_ratio);

    let mut w = vec![0.0; p];
    let mut r = ys.clone();
    let objective = |w: &[f64], r: &[f64]| {
        let fit = r.iter().map(|v| v * v).sum::<f64>() / (2.0 * nf);
        let pen_l1: f64 = w.iter().map(|v| v.abs()).sum();
        let pen_l2: f64 = w.iter().map(|v| v * v).sum();
        fit + alpha * (l1_ratio * pen_l1 + 0.5 * (1.0 - l1_ratio) * pen_l2)
    };
    let mut history = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < control.max_sweeps {
        sweeps += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            let denom = norms[j] + l2;
            if denom <= 0.0 {
                continue;
            }
            let c = &cols[j];
            let old = w[j];
            let rho: f64 = c.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() + norms[j] * old;
            let new = soft_threshold(rho, l1) / denom;
            let delta = new - old;
            if delta != 0.0 {
                for (ri, ci) in r.iter_mut().zip(c) {
                    *ri -= delta * ci;
                }
                w[j] = new;
            }
            max_delta = max_delta.max(delta.abs());
        }
        history.push(objective(&w, &r));
        if max_delta < control.tol {
            converged = true;
            break;
        }
    }
    Ok(ElasticNetModel {
        weights: w,
        alpha,
        l1_ratio,
        x_stats,
        y_mean: y_stats.mean[0],
        y_scale: y_stats.scale[0],
        converged,
        sweeps,
        n_rows: x.rows(),
        objective_history: history,
    })
}

impl ElasticNetModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let z = self.x_stats.transform_row(x);
        self.y_mean + self.y_scale * z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }

    /// Intercept in target units for raw (unstandardized) features.
    pub fn intercept(&self) -> f64 {
        self.y_mean - self.raw_weights().iter().zip(&self.x_stats.mean).map(|(w, m)| w * m).sum::<f64>()
    }

    /// Weights on raw features, in target units.
    pub fn raw_weights(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.x_stats.scale).map(|(w, s)| w * self.y_scale / s).collect()
    }
}
