//! Gaussian-process regression (kriging) on standardized data.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::kernels::KernelSpec;
use super::Standardizer;
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::linalg::{dot, squared_distance, Cholesky, Matrix};
use crate::sampling::{latin_hypercube, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GprControl {
    /// Maximize the log-marginal likelihood over the kernel scales and nugget.
    pub optimize: bool,
    pub starts: usize,
    /// Likelihood evaluations per start.
    pub max_evals: usize,
    /// Hyperparameter search uses at most this many evenly strided rows.
    pub subset: usize,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for GprControl {
    fn default() -> Self {
        Self { optimize: true, starts: 8, max_evals: 150, subset: 256, seed: 0, execution: Execution::default() }
    }
}

const LOG_LENGTH: [f64; 2] = [-4.605170185988091, 9.210340371976184]; // 1e-2 .. 1e4
const LOG_VARIANCE: [f64; 2] = [-6.907755278982137, 4.605170185988092]; // 1e-3 .. 1e2
const LOG_NUGGET: [f64; 2] = [-18.420680743952367, 0.0]; // 1e-8 .. 1
const MIN_STEP: f64 = 0.02;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GprDocument", into = "GprDocument")]
pub struct GprModel {
    pub kernel: KernelSpec,
    /// Noise variance in standardized target units.
    pub nugget: f64,
    pub x_stats: Standardizer,
    pub y_mean: f64,
    pub y_scale: f64,
    x_train: Matrix,
    y_train: Vec<f64>,
    alpha: Vec<f64>,
    chol: Cholesky,
    /// Relative jitter the factorization needed (0 if none).
    pub jitter: f64,
    pub log_marginal_likelihood: f64,
}

/// Serialized form: the factorization is rebuilt on load.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GprDocument {
    version: u32,
    kernel: KernelSpec,
    nugget: f64,
    x_stats: Standardizer,
    y_mean: f64,
    y_scale: f64,
    x_train: Matrix,
    y_train: Vec<f64>,
}

impl From<GprModel> for GprDocument {
    fn from(m: GprModel) -> Self {
        Self {
            version: 1,
            kernel: m.kernel,
            nugget: m.nugget,
            x_stats: m.x_stats,
            y_mean: m.y_mean,
            y_scale: m.y_scale,
            x_train: m.x_train,
            y_train: m.y_train,
        }
    }
}

impl TryFrom<GprDocument> for GprModel {
    type Error = Error;

    fn try_from(d: GprDocument) -> Result<Self> {
        if d.version != 1 {
            return Err(Error::Validation(format!("unsupported GPR document version {}", d.version)));
        }
        assemble(d.kernel, d.nugget, d.x_stats, d.y_mean, d.y_scale, d.x_train, d.y_train)
    }
}

fn gram(kernel: &KernelSpec, x: &Matrix, nugget: f64) -> Matrix {
    let n = x.rows();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval_unchecked(x.row(i), x.row(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += nugget;
    }
    k
}

fn log_likelihood(chol: &Cholesky, y: &[f64], alpha: &[f64]) -> f64 {
    -0.5 * dot(y, alpha) - 0.5 * chol.log_det() - 0.5 * y.len() as f64 * (2.0 * PI).ln()
}

fn assemble(
    kernel: KernelSpec,
    nugget: f64,
    x_stats: Standardizer,
    y_mean: f64,
    y_scale: f64,
    x_train: Matrix,
    y_train: Vec<f64>,
) -> Result<GprModel> {
    let chol = Cholesky::new(&gram(&kernel, &x_train, nugget))?;
    let alpha = chol.solve(&y_train);
    let lml = log_likelihood(&chol, &y_train, &alpha);
    Ok(GprModel {
        kernel,
        nugget,
        x_stats,
        y_mean,
        y_scale,
        x_train,
        y_train,
        alpha,
        jitter: chol.jitter,
        chol,
        log_marginal_likelihood: lml,
    })
}

/// Pairwise quantities reused across every likelihood evaluation.
struct Pairwise {
    r2: Matrix,
    xy: Matrix,
    y: Vec<f64>,
}

impl Pairwise {
    fn new(x: &Matrix, y: &[f64]) -> Self {
        let n = x.rows();
        let mut r2 = Matrix::zeros(n, n);
        let mut xy = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let d = squared_distance(x.row(i), x.row(j));
                let p = dot(x.row(i), x.row(j));
                r2[(i, j)] = d;
                r2[(j, i)] = d;
                xy[(i, j)] = p;
                xy[(j, i)] = p;
            }
        }
        Self { r2, xy, y: y.to_vec() }
    }

    fn lml(&self, kernel: &KernelSpec, nugget: f64) -> f64 {
        let n = self.y.len();
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = kernel.eval_parts(self.r2[(i, j)], self.xy[(i, j)]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(i, i)] += nugget;
        }
        match Cholesky::new(&k) {
            Ok(c) => {
                let a = c.solve(&self.y);
                let v = log_likelihood(&c, &self.y, &a);
                if v.is_finite() {
                    v
                } else {
                    f64::NEG_INFINITY
                }
            }
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// Search box in log space for (kernel log-params..., log nugget), widened
/// to contain the starting point.
fn search_box(kernel: &KernelSpec, nugget: f64) -> (Vec<f64>, Vec<[f64; 2]>) {
    let mut x0 = kernel.log_params();
    let mut bounds = Vec::new();
    if kernel.kind.has_length_scale() {
        bounds.push(LOG_LENGTH);
    }
    if kernel.kind.has_variance() {
        bounds.push(LOG_VARIANCE);
    }
    x0.push(nugget.max(1e-300).ln());
    bounds.push(LOG_NUGGET);
    for (b, x) in bounds.iter_mut().zip(&x0) {
        b[0] = b[0].min(*x);
        b[1] = b[1].max(*x);
    }
    (x0, bounds)
}

/// Hooke–Jeeves pattern search (maximizing): coordinate exploration with
/// step halving, plus extrapolating moves along each successful direction so
/// the search can follow diagonal likelihood ridges.
fn coordinate_search(
    f: &dyn Fn(&[f64]) -> f64,
    x0: Vec<f64>,
    bounds: &[[f64; 2]],
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let clamp = |x: &mut Vec<f64>| {
        for (v, b) in x.iter_mut().zip(bounds) {
            *v = v.clamp(b[0], b[1]);
        }
    };
    let evals = std::cell::Cell::new(0usize);
    let mut eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        f(x)
    };
    let mut base = x0;
    let mut f_base = eval(&base);
    let mut step = 1.0;
    let explore = |x: &[f64], fx: f64, step: f64, eval: &mut dyn FnMut(&[f64]) -> f64| {
        let (mut x, mut fx) = (x.to_vec(), fx);
        for d in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[d] = (x[d] + dir * step).clamp(bounds[d][0], bounds[d][1]);
                if y[d] == x[d] {
                    continue;
                }
                let fy = eval(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    break;
                }
            }
        }
        (x, fx)
    };
    while step >= MIN_STEP {
        let (mut x, mut fx) = explore(&base, f_base, step, &mut eval);
        if fx > f_base {
            loop {
                let mut p: Vec<f64> = x.iter().zip(&base).map(|(a, b)| 2.0 * a - b).collect();
                clamp(&mut p);
                base = x.clone();
                f_base = fx;
                let fp = eval(&p);
                let (xp, fxp) = explore(&p, fp, step, &mut eval);
                if fxp > f_base {
                    x = xp;
                    fx = fxp;
                } else {
                    break;
                }
                if evals.get() >= max_evals {
                    break;
                }
            }
        } else {
            step *= 0.5;
        }
        if evals.get() >= max_evals {
            break;
        }
    }
    (base, f_base)
}

/// Fits a GPR to `(x, y)`. Inputs are standardized per column and the target
/// to zero mean and unit variance; with `control.optimize` the length scale,
/// σ² (Matern) and nugget maximize the log-marginal likelihood.
pub fn gpr_fit(x: &Matrix, y: &[f64], spec: KernelSpec, nugget: f64, control: &GprControl) -> Result<GprModel> {
    spec.validate()?;
    let n = x.rows();
    if n < 2 {
        return Err(invalid("GPR needs at least two training points"));
    }
    if y.len() != n {
        return Err(invalid(format!("GPR has {n} inputs but {} targets", y.len())));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(invalid("GPR training data must be finite"));
    }
    if !(nugget >= 0.0) {
        return Err(invalid("nugget must be non-negative"));
    }
    let x_stats = Standardizer::fit(x);
    let xs = x_stats.transform(x);
    let y_stats = Standardizer::fit_vec(y);
    let ys: Vec<f64> = y.iter().map(|v| (v - y_stats.mean[0]) / y_stats.scale[0]).collect();

    let (mut kernel, mut nug) = (spec, nugget);
    if control.optimize {
        let stride = n.div_ceil(control.subset.max(2));
        let idx: Vec<usize> = (0..n).step_by(stride).collect();
        let sub_y: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
        let pw = Pairwise::new(&xs.select_rows(&idx), &sub_y);
        let (x0, bounds) = search_box(&spec, nugget);
        let dims = x0.len();
        let mut starts = vec![x0];
        let mut rng = stream(control.seed, &[0x677072]);
        for u in latin_hypercube(control.starts.saturating_sub(1), dims, &mut rng) {
            starts.push(u.iter().zip(&bounds).map(|(u, b)| b[0] + u * (b[1] - b[0])).collect());
        }
        let objective = |p: &[f64]| pw.lml(&spec.with_log_params(&p[..dims - 1]), p[dims - 1].exp());
        let results =
            control.execution.map(&starts, |s| coordinate_search(&objective, s.clone(), &bounds, control.max_evals));
        let mut best: Option<(Vec<f64>, f64)> = None;
        for (p, f) in results {
            if best.as_ref().is_none_or(|b| f > b.1) {
                best = Some((p, f));
            }
        }
        let (p, f) = best.expect("at least one start");
        if f.is_finite() {
            kernel = spec.with_log_params(&p[..dims - 1]);
            nug = p[dims - 1].exp();
        }
    }
    assemble(kernel, nug, x_stats, y_stats.mean[0], y_stats.scale[0], xs, ys)
}

impl GprModel {
    pub fn n_train(&self) -> usize {
        self.x_train.rows()
    }

    fn cross(&self, xs: &[f64]) -> Vec<f64> {
        (0..self.n_train()).map(|i| self.kernel.eval_unchecked(xs, self.x_train.row(i))).collect()
    }

    /// Posterior mean and latent variance (target units²) at each row of `x`.
    pub fn predict(&self, x: &Matrix) -> (Vec<f64>, Vec<f64>) {
        let mut mean = Vec::with_capacity(x.rows());
        let mut var = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let xs = self.x_stats.transform_row(x.row(i));
            let k = self.cross(&xs);
            mean.push(self.y_mean + self.y_scale * dot(&k, &self.alpha));
            let v = self.chol.solve_lower(&k);
            let prior = self.kernel.eval_unchecked(&xs, &xs);
            var.push(((prior - dot(&v, &v)) * self.y_scale * self.y_scale).max(0.0));
        }
        (mean, var)
    }

    pub fn predict_mean(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows())
            .map(|i| {
                let xs = self.x_stats.transform_row(x.row(i));
                self.y_mean + self.y_scale * dot(&self.cross(&xs), &self.alpha)
            })
            .collect()
    }

    /// Prior covariance between two raw inputs, in target units².
    pub fn covariance(&self, a: &[f64], b: &[f64]) -> f64 {
        let (a, b) = (self.x_stats.transform_row(a), self.x_stats.transform_row(b));
        self.y_scale * self.y_scale * self.kernel.eval_unchecked(&a, &b)
    }

    /// Diagonal noise term, in target units².
    pub fn noise_variance(&self) -> f64 {
        self.y_scale * self.y_scale * self.nugget
    }

    /// Max |(K + σ_n²I)α − y| over the standardized training targets.
    pub fn solve_residual(&self) -> f64 {
        let k = gram(&self.kernel, &self.x_train, self.nugget);
        let ka = k.mat_vec(&self.alpha);
        ka.iter().zip(&self.y_train).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}
