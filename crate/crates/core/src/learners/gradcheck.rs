//! Central finite-difference check of an analytic gradient.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// Largest relative error over the checked coordinates.
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    /// Coordinates whose finite difference straddles a kink; excluded.
    pub kinks: Vec<usize>,
    pub checked: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tol
    }
}

const REL_STEP: f64 = 1e-5;

/// Compares `grad` with central differences of `f` at `params`, step
/// `1e-5·max(|p_i|, 1)`. Relative error uses the denominator
/// `max(|analytic|, |numeric|, 1e-6·max|grad|)`. A coordinate that fails is
/// re-probed at half the step; if its one-sided slopes jump instead of
/// shrinking linearly with the step, it is reported as a kink rather than a
/// failure.
pub fn grad_check(f: impl Fn(&[f64]) -> f64, params: &[f64], grad: &[f64], tol: f64) -> GradCheckReport {
    assert_eq!(params.len(), grad.len());
    let f0 = f(params);
    let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let floor = (1e-6 * gmax).max(1e-300);
    let mut p = params.to_vec();
    let mut eval = |i: usize, h: f64| {
        let old = p[i];
        p[i] = old + h;
        let v = f(&p);
        p[i] = old;
        v
    };
    let mut report = GradCheckReport { max_rel_error: 0.0, worst_index: None, kinks: Vec::new(), checked: 0, tol };
    for i in 0..params.len() {
        let h = REL_STEP * params[i].abs().max(1.0);
        let (fp, fm) = (eval(i, h), eval(i, -h));
        let numeric = (fp - fm) / (2.0 * h);
        let a = grad[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if rel > tol {
            let (fp2, fm2) = (eval(i, 0.5 * h), eval(i, -0.5 * h));
            let d1 = (fp - 2.0 * f0 + fm) / h;
            let d2 = (fp2 - 2.0 * f0 + fm2) / (0.5 * h);
            let jump = d1.abs().max(d2.abs());
            if (d2 - 0.5 * d1).abs() > 0.25 * d1.abs() && jump > tol * a.abs().max(floor) {
                report.kinks.push(i);
                continue;
            }
        }
        report.checked += 1;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = Some(i);
        }
    }
    report
}
