//! Two-fidelity co-kriging with the autoregressive model
//! `f_H(x) = ρ·f_L(x) + f_Δ(x)`, one independent model per health target.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::learners::{gpr_fit, GprControl, GprModel, KernelSpec};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::optim::golden_section;

const RHO_RANGE: [f64; 2] = [0.0, 2.0];
const RHO_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoKrigingConfig {
    pub kernel_low: KernelSpec,
    pub nugget_low: f64,
    pub kernel_delta: KernelSpec,
    pub nugget_delta: f64,
    /// Fit ρ per target by maximizing the joint likelihood; otherwise ρ = 1.
    pub estimate_rho: bool,
    pub gpr: GprControl,
}

impl Default for CoKrigingConfig {
    fn default() -> Self {
        Self {
            kernel_low: KernelSpec::matern32(1.0, 10.0),
            nugget_low: 0.015,
            kernel_delta: KernelSpec::matern32(1.0, 1.0),
            nugget_delta: 0.007,
            estimate_rho: false,
            gpr: GprControl::default(),
        }
    }
}

/// Per-target low-fidelity GPRs and the simulation inputs they were fit on.
/// Shared between folds and repeats: it depends only on the simulation grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LowFidelity {
    pub models: Vec<GprModel>,
    pub x: Matrix,
    pub y: Matrix,
}

impl LowFidelity {
    pub fn fit(x: &Matrix, y: &Matrix, kernel: KernelSpec, nugget: f64, control: &GprControl) -> Result<Self> {
        if x.rows() < 4 {
            return Err(invalid(format!("co-kriging needs at least 4 low-fidelity rows, got {}", x.rows())));
        }
        if y.rows() != x.rows() {
            return Err(invalid("low-fidelity inputs and targets differ in length"));
        }
        let inner = GprControl { execution: Execution::Sequential, ..*control };
        let models = control.execution.map_range(y.cols(), |t| gpr_fit(x, &y.column(t), kernel, nugget, &inner));
        Ok(Self { models: models.into_iter().collect::<Result<_>>()?, x: x.clone(), y: y.clone() })
    }

    /// N × targets posterior means.
    pub fn predict_mean(&self, x: &Matrix) -> Matrix {
        column_stack(x.rows(), self.models.iter().map(|m| m.predict_mean(x)).collect())
    }
}

fn column_stack(rows: usize, cols: Vec<Vec<f64>>) -> Matrix {
    let mut m = Matrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        for i in 0..rows {
            m[(i, j)] = c[i];
        }
    }
    m
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoKrigingModel {
    pub low: Arc<LowFidelity>,
    pub delta: Vec<GprModel>,
    pub rho: Vec<f64>,
    /// High-fidelity training inputs.
    pub x_high: Matrix,
}

/// Covariance blocks of the joint prior over `[f_L(X_L); f_H(X_H)]` and the
/// cross-covariance of `f_H(x*)` with it.
struct Joint<'a> {
    low: &'a GprModel,
    delta: &'a GprModel,
    rho: f64,
    xl: Matrix,
    xh_low: Matrix,
    xh_delta: Matrix,
}

impl<'a> Joint<'a> {
    fn new(low: &'a GprModel, delta: &'a GprModel, rho: f64, x_low: &Matrix, x_high: &Matrix) -> Self {
        Self {
            low,
            delta,
            rho,
            xl: low.x_stats.transform(x_low),
            xh_low: low.x_stats.transform(x_high),
            xh_delta: delta.x_stats.transform(x_high),
        }
    }

    fn k_low(&self, a: &[f64], b: &[f64]) -> f64 {
        self.low.y_scale * self.low.y_scale * self.low.kernel.eval_unchecked(a, b)
    }

    fn k_delta(&self, a: &[f64], b: &[f64]) -> f64 {
        self.delta.y_scale * self.delta.y_scale * self.delta.kernel.eval_unchecked(a, b)
    }

    fn matrix(&self) -> Matrix {
        let (nl, nh) = (self.xl.rows(), self.xh_low.rows());
        let n = nl + nh;
        let mut c = Matrix::zeros(n, n);
        let r = self.rho;
        for i in 0..nl {
            for j in 0..=i {
                let v = self.k_low(self.xl.row(i), self.xl.row(j));
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
            c[(i, i)] += self.low.noise_variance();
        }
        for i in 0..nh {
            for j in 0..nl {
                let v = r * self.k_low(self.xh_low.row(i), self.xl.row(j));
                c[(nl + i, j)] = v;
                c[(j, nl + i)] = v;
            }
            for j in 0..=i {
                let v = r * r * self.k_low(self.xh_low.row(i), self.xh_low.row(j))
                    + self.k_delta(self.xh_delta.row(i), self.xh_delta.row(j));
                c[(nl + i, nl + j)] = v;
                c[(nl + j, nl + i)] = v;
            }
            c[(nl + i, nl + i)] += self.delta.noise_variance();
        }
        c
    }

    /// Prior variance at `x` and its covariance with the joint observations.
    fn cross(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let xs_low = self.low.x_stats.transform_row(x);
        let xs_delta = self.delta.x_stats.transform_row(x);
        let r = self.rho;
        let mut c: Vec<f64> = (0..self.xl.rows()).map(|j| r * self.k_low(&xs_low, self.xl.row(j))).collect();
        c.extend(
            (0..self.xh_low.rows()).map(|j| {
                r * r * self.k_low(&xs_low, self.xh_low.row(j)) + self.k_delta(&xs_delta, self.xh_delta.row(j))
            }),
        );
        let prior = r * r * self.k_low(&xs_low, &xs_low) + self.k_delta(&xs_delta, &xs_delta);
        (prior, c)
    }
}

fn joint_log_likelihood(
    low: &GprModel,
    delta: &GprModel,
    rho: f64,
    x_low: &Matrix,
    y_low: &[f64],
    x_high: &Matrix,
    y_high: &[f64],
) -> Result<f64> {
    let joint = Joint::new(low, delta, rho, x_low, x_high);
    let chol = Cholesky::new(&joint.matrix())?;
    let mh = rho * low.y_mean + delta.y_mean;
    let r: Vec<f64> = y_low.iter().map(|y| y - low.y_mean).chain(y_high.iter().map(|y| y - mh)).collect();
    let a = chol.solve(&r);
    let n = r.len() as f64;
    Ok(-0.5 * dot(&r, &a) - 0.5 * chol.log_det() - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
}

fn fixed(control: &GprControl) -> GprControl {
    GprControl { optimize: false, execution: Execution::Sequential, ..*control }
}

fn estimate_rho(
    low: &LowFidelity,
    t: usize,
    x_high: &Matrix,
    y_high: &[f64],
    mu: &[f64],
    delta0: &GprModel,
    cfg: &CoKrigingConfig,
) -> f64 {
    let yl = low.y.column(t);
    let neg = |rho: f64| {
        let yd: Vec<f64> = y_high.iter().zip(mu).map(|(y, m)| y - rho * m).collect();
        gpr_fit(x_high, &yd, delta0.kernel, delta0.nugget, &fixed(&cfg.gpr))
            .and_then(|d| joint_log_likelihood(&low.models[t], &d, rho, &low.x, &yl, x_high, y_high))
            .map_or(f64::INFINITY, |l| -l)
    };
    golden_section(neg, RHO_RANGE[0], RHO_RANGE[1], RHO_TOL).0
}

/// Fits the discrepancy models against a shared low-fidelity fit.
pub fn train_cokriging(
    x_high: &Matrix,
    y_high: &Matrix,
    low: Arc<LowFidelity>,
    cfg: &CoKrigingConfig,
) -> Result<CoKrigingModel> {
    if x_high.rows() < 4 {
        return Err(invalid(format!("co-kriging needs at least 4 high-fidelity rows, got {}", x_high.rows())));
    }
    if y_high.rows() != x_high.rows() || y_high.cols() != low.models.len() {
        return Err(invalid("high-fidelity targets do not match the low-fidelity models"));
    }
    let mu = low.predict_mean(x_high);
    let inner = GprControl { execution: Execution::Sequential, ..cfg.gpr };
    let fits = cfg.gpr.execution.map_range(y_high.cols(), |t| -> Result<(f64, GprModel)> {
        let yh = y_high.column(t);
        let mu_t = mu.column(t);
        let discrepancy = |rho: f64| -> Vec<f64> { yh.iter().zip(&mu_t).map(|(y, m)| y - rho * m).collect() };
        let first = gpr_fit(x_high, &discrepancy(1.0), cfg.kernel_delta, cfg.nugget_delta, &inner)?;
        if !cfg.estimate_rho {
            return Ok((1.0, first));
        }
        let rho = estimate_rho(&low, t, x_high, &yh, &mu_t, &first, cfg);
        Ok((rho, gpr_fit(x_high, &discrepancy(rho), first.kernel, first.nugget, &fixed(&cfg.gpr))?))
    });
    let mut rho = Vec::new();
    let mut delta = Vec::new();
    for f in fits {
        let (r, d) = f?;
        rho.push(r);
        delta.push(d);
    }
    Ok(CoKrigingModel { low, delta, rho, x_high: x_high.clone() })
}

impl CoKrigingModel {
    /// `ρ·μ_L(x) + μ_Δ(x)` per target.
    pub fn predict_mean(&self, x: &Matrix) -> Matrix {
        let mu = self.low.predict_mean(x);
        let mut out = Matrix::zeros(x.rows(), self.delta.len());
        for (t, d) in self.delta.iter().enumerate() {
            let md = d.predict_mean(x);
            for i in 0..x.rows() {
                out[(i, t)] = self.rho[t] * mu[(i, t)] + md[i];
            }
        }
        out
    }

    /// Posterior variance of `f_H` conditioned jointly on the simulation and
    /// experimental observations, per target, floored at 0.
    pub fn posterior_variance(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(x.rows(), self.delta.len());
        for t in 0..self.delta.len() {
            let joint = Joint::new(&self.low.models[t], &self.delta[t], self.rho[t], &self.low.x, &self.x_high);
            let chol = Cholesky::new(&joint.matrix())?;
            for i in 0..x.rows() {
                let (prior, c) = joint.cross(x.row(i));
                let v = chol.solve_lower(&c);
                out[(i, t)] = (prior - dot(&v, &v)).max(0.0);
            }
        }
        Ok(out)
    }

    /// Low- plus high-fidelity rows seen in training.
    pub fn exposure(&self) -> usize {
        self.low.x.rows() + self.x_high.rows()
    }
}
