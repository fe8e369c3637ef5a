//! Automatic half-cell fitting: recover (m_p, m_n, δ_p, δ_n) from a full-cell
//! discharge curve by multi-start Nelder–Mead on a two-term loss (endpoint
//! capacity mismatch plus voltage RMSE).
//!
//! Only the slippage difference affects the windowed curve, so the search runs
//! over (m_p, m_n, δ_p - δ_n) and the result is returned in canonical form.

use serde::{Deserialize, Serialize};

use super::{canonicalize, cell_voltage, locate_window, FullCellCurve, HalfCellParams, VoltageWindow};
use crate::electrode::ElectrodePair;
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::sampling::{latin_hypercube, stream};

/// Inclusive per-parameter ranges, `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBounds {
    pub m_p: [f64; 2],
    pub m_n: [f64; 2],
    pub delta_p: [f64; 2],
    pub delta_n: [f64; 2],
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self { m_p: [1.35, 2.05], m_n: [0.65, 1.03], delta_p: [-5.0, 90.0], delta_n: [-30.0, 0.0] }
    }
}

impl ParamBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in HalfCellParams::NAMES.iter().zip(self.as_array()) {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(invalid(format!("bounds for {name} must satisfy lo <= hi, got [{lo}, {hi}]")));
            }
        }
        if self.m_p[0] <= 0.0 || self.m_n[0] <= 0.0 {
            return Err(invalid("mass bounds must be positive"));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [[f64; 2]; 4] {
        [self.m_p, self.m_n, self.delta_p, self.delta_n]
    }

    /// Maps a point of the unit hypercube onto the box.
    pub fn scale(&self, u: &[f64]) -> HalfCellParams {
        let b = self.as_array();
        let at = |k: usize| b[k][0] + u[k] * (b[k][1] - b[k][0]);
        HalfCellParams { m_p: at(0), m_n: at(1), delta_p: at(2), delta_n: at(3) }
    }

    pub fn contains(&self, p: &HalfCellParams) -> bool {
        self.as_array().iter().zip(p.to_array()).all(|([lo, hi], x)| x >= *lo && x <= *hi)
    }

    fn search_box(&self) -> [[f64; 2]; 3] {
        [self.m_p, self.m_n, [self.delta_p[0] - self.delta_n[1], self.delta_p[1] - self.delta_n[0]]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    /// Weight of the squared relative capacity mismatch.
    pub w_end: f64,
    /// Weight of the voltage RMSE relative to the window width.
    pub w_rmse: f64,
    pub starts: usize,
    pub bounds: ParamBounds,
    pub seed: u64,
    pub max_evals: usize,
    /// Optional first start point (the remaining starts are Latin hypercube draws).
    #[serde(skip)]
    pub initial: Option<HalfCellParams>,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            w_end: 1.0,
            w_rmse: 1.0,
            starts: 16,
            bounds: ParamBounds::default(),
            seed: 0,
            max_evals: 3000,
            initial: None,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub loss: f64,
    /// Final loss of each start, in start order (`inf` when the start point
    /// was infeasible).
    pub start_losses: Vec<f64>,
    /// Canonical parameters reached by each start (`None` when infeasible).
    pub start_params: Vec<Option<HalfCellParams>>,
    pub iterations: Vec<usize>,
    pub evaluations: usize,
    pub best_start: usize,
}

struct Objective<'a> {
    pair: &'a ElectrodePair,
    target: &'a FullCellCurve,
    window: VoltageWindow,
    w_end: f64,
    w_rmse: f64,
    q_target: f64,
}

impl Objective<'_> {
    fn params(x: &[f64]) -> HalfCellParams {
        HalfCellParams { m_p: x[0], m_n: x[1], delta_p: x[2], delta_n: 0.0 }
    }

    fn loss(&self, x: &[f64]) -> f64 {
        let p = Self::params(x);
        let Ok(win) = locate_window(self.pair, &p, self.window) else {
            return f64::INFINITY;
        };
        let end = (win.usable_capacity() - self.q_target) / self.q_target;
        let (q, v) = (self.target.q(), self.target.v());
        let sse: f64 =
            q.iter().zip(v).map(|(&qi, &vi)| (cell_voltage(self.pair, &p, win.q_top + qi) - vi).powi(2)).sum();
        let rmse = (sse / q.len() as f64).sqrt();
        self.w_end * end * end + self.w_rmse * rmse / self.window.width()
    }
}

/// Fits half-cell parameters to a measured (or simulated) full-cell curve.
pub fn fit_halfcell_auto(
    pair: &ElectrodePair,
    target: &FullCellCurve,
    opts: &FitOptions,
) -> Result<(HalfCellParams, FitReport)> {
    opts.bounds.validate()?;
    if opts.starts == 0 {
        return Err(invalid("need at least one start"));
    }
    if !(opts.w_end >= 0.0 && opts.w_rmse >= 0.0) || opts.w_end + opts.w_rmse == 0.0 {
        return Err(invalid("fit weights must be non-negative and not both zero"));
    }
    let window = target.window();
    let obj =
        Objective { pair, target, window, w_end: opts.w_end, w_rmse: opts.w_rmse, q_target: target.usable_capacity() };
    let sbox = opts.bounds.search_box();
    let lo: Vec<f64> = sbox.iter().map(|b| b[0]).collect();
    let hi: Vec<f64> = sbox.iter().map(|b| b[1]).collect();

    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(opts.starts);
    if let Some(p) = opts.initial {
        starts.push(vec![p.m_p, p.m_n, p.delta_p - p.delta_n]);
    }
    let n_lhs = opts.starts - starts.len();
    let mut rng = stream(opts.seed, &[0x66_69_74]);
    for u in latin_hypercube(n_lhs, 3, &mut rng) {
        starts.push((0..3).map(|k| lo[k] + u[k] * (hi[k] - lo[k])).collect());
    }

    let nm = NelderMeadOptions { max_evals: opts.max_evals, ..Default::default() };
    let runs = opts.execution.map(&starts, |x0| {
        if !obj.loss(x0).is_finite() {
            return None;
        }
        let first = nelder_mead(|x| obj.loss(x), x0, &lo, &hi, &nm);
        // A restart from the converged vertex escapes premature simplex collapse.
        let polish = nelder_mead(|x| obj.loss(x), &first.x, &lo, &hi, &NelderMeadOptions { step: 0.005, ..nm });
        let best = if polish.f <= first.f { polish.x.clone() } else { first.x.clone() };
        Some((best, first.f.min(polish.f), first.iterations + polish.iterations, first.evals + polish.evals + 1))
    });

    let mut report = FitReport {
        loss: f64::INFINITY,
        start_losses: Vec::with_capacity(runs.len()),
        start_params: Vec::with_capacity(runs.len()),
        iterations: Vec::with_capacity(runs.len()),
        evaluations: 0,
        best_start: 0,
    };
    let mut best: Option<Vec<f64>> = None;
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Some((x, f, it, ev)) => {
                report.start_params.push(canonicalize(pair, &Objective::params(&x), window).ok());
                report.start_losses.push(f);
                report.iterations.push(it);
                report.evaluations += ev;
                if f < report.loss {
                    report.loss = f;
                    report.best_start = i;
                    best = Some(x);
                }
            }
            None => {
                report.start_losses.push(f64::INFINITY);
                report.start_params.push(None);
                report.iterations.push(0);
                report.evaluations += 1;
            }
        }
    }
    let x = best.ok_or_else(|| Error::FitFailure(format!("none of the {} start points was feasible", opts.starts)))?;
    let params = canonicalize(pair, &Objective::params(&x), window)?;
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::halfcell::reconstruct_ocv;

    fn target(p: &HalfCellParams) -> (ElectrodePair, FullCellCurve) {
        let pair = ElectrodePair::synthetic();
        let c = reconstruct_ocv(&pair, p, VoltageWindow::default(), 300).unwrap();
        (pair, c)
    }

    #[test]
    fn seeded_at_truth_stays_there() {
        let truth = HalfCellParams::new(1.8, 0.9, 20.0, -10.0).unwrap();
        let (pair, c) = target(&truth);
        let opts = FitOptions { starts: 1, initial: Some(truth), ..Default::default() };
        let (p, rep) = fit_halfcell_auto(&pair, &c, &opts).unwrap();
        let canon = canonicalize(&pair, &truth, VoltageWindow::default()).unwrap();
        assert!(rep.loss < 1e-10, "{}", rep.loss);
        for (a, b) in p.to_array().iter().zip(canon.to_array()) {
            assert!((a - b).abs() < 1e-6, "{p:?} vs {canon:?}");
        }
    }

    #[test]
    fn sixteen_starts_recover_truth() {
        let truth = HalfCellParams::new(1.7, 0.85, 35.0, -20.0).unwrap();
        let (pair, c) = target(&truth);
        let (p, rep) = fit_halfcell_auto(&pair, &c, &FitOptions { seed: 3, ..Default::default() }).unwrap();
        let canon = canonicalize(&pair, &truth, VoltageWindow::default()).unwrap();
        for (a, b) in p.to_array().iter().zip(canon.to_array()) {
            assert!((a - b).abs() <= 0.02 * b.abs(), "{p:?} vs {canon:?}");
        }
        assert_eq!(rep.start_losses.len(), 16);
    }

    #[test]
    fn infeasible_box_is_fit_failure() {
        let truth = HalfCellParams::fresh();
        let (pair, c) = target(&truth);
        let bounds = ParamBounds { m_p: [5.0, 6.0], m_n: [0.01, 0.02], delta_p: [0.0, 0.0], delta_n: [0.0, 0.0] };
        let r = fit_halfcell_auto(&pair, &c, &FitOptions { starts: 3, bounds, ..Default::default() });
        assert!(matches!(r, Err(Error::FitFailure(_))), "{r:?}");
    }
}
