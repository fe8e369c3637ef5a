//! Forward half-cell model: pseudo-OCV reconstruction from the two electrode
//! curves, differential curves, health parameters, and peak detection; plus
//! the inverse problem (automatic fitting) in [`fit`].
//!
//! The full-cell voltage at capacity `Q` is
//! `V_c(Q) = V_p((Q - δ_p) / m_p) - V_n((Q - δ_n) / m_n)`.
//! Positive slippage moves an electrode curve toward higher full-cell `Q`.
//! Shifting both slippages by the same amount only translates the curve, so
//! it cannot be recovered from the windowed data. [`canonicalize`] removes
//! that freedom by placing `Q = 0` at the upper window voltage.

pub mod fit;
pub mod modes;
pub mod peaks;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::electrode::ElectrodePair;
use crate::error::{invalid, Error, Result};
use crate::interp::MonotoneCubic;

pub use fit::{fit_halfcell_auto, FitOptions, FitReport, ParamBounds};
pub use modes::{apply_mode, single_mode_icq, DegradationMode};
pub use peaks::{detect_peaks, Peak, PeakConfig, PeakSet};

/// Feature vector length (points on the voltage grid).
pub const FEATURE_LEN: usize = 100;
/// Q-grid resolution used when reconstructing curves for feature extraction.
pub const DEFAULT_N_GRID: usize = 1000;
pub const MIN_N_GRID: usize = 100;
/// Bisection tolerance on the window voltages.
pub const VOLTAGE_TOL: f64 = 1e-9;
/// Smallest voltage decrement allowed between consecutive curve samples.
pub const MIN_VOLTAGE_STEP: f64 = 1e-9;

/// Parameters whose upper crossing already lies this close to `Q = 0` count
/// as canonical and are returned unchanged.
pub const CANONICAL_TOL: f64 = 1e-9;

const SCAN_POINTS: usize = 256;
const SCAN_PAD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfCellParams {
    /// PE active mass (g)
    pub m_p: f64,
    /// NE active mass (g)
    pub m_n: f64,
    /// PE slippage (mAh)
    pub delta_p: f64,
    /// NE slippage (mAh)
    pub delta_n: f64,
}

impl HalfCellParams {
    pub const NAMES: [&'static str; 4] = ["m_p", "m_n", "delta_p", "delta_n"];

    pub fn new(m_p: f64, m_n: f64, delta_p: f64, delta_n: f64) -> Result<Self> {
        let p = Self { m_p, m_n, delta_p, delta_n };
        p.validate()?;
        Ok(p)
    }

    /// Reference state of the built-in synthetic cell, before canonicalization.
    pub fn fresh() -> Self {
        Self { m_p: 2.0, m_n: 1.0, delta_p: 0.0, delta_n: -15.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m_p > 0.0 && self.m_n > 0.0) || !self.m_p.is_finite() || !self.m_n.is_finite() {
            return Err(Error::InfeasibleParameters(format!(
                "active masses must be positive and finite (m_p = {}, m_n = {})",
                self.m_p, self.m_n
            )));
        }
        if !(self.delta_p.is_finite() && self.delta_n.is_finite()) {
            return Err(Error::InfeasibleParameters("slippage must be finite".into()));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.m_p, self.m_n, self.delta_p, self.delta_n]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self { m_p: a[0], m_n: a[1], delta_p: a[2], delta_n: a[3] }
    }

    /// Same masses, both slippages moved by `shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        Self { delta_p: self.delta_p + shift, delta_n: self.delta_n + shift, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoltageWindow {
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for VoltageWindow {
    fn default() -> Self {
        Self { v_min: 3.4, v_max: 4.075 }
    }
}

impl VoltageWindow {
    pub fn new(v_min: f64, v_max: f64) -> Result<Self> {
        if !(v_min < v_max) || !v_min.is_finite() || !v_max.is_finite() {
            return Err(invalid(format!("voltage window needs v_min < v_max, got [{v_min}, {v_max}]")));
        }
        Ok(Self { v_min, v_max })
    }

    pub fn width(&self) -> f64 {
        self.v_max - self.v_min
    }

    /// The fixed uniform feature grid over the window.
    pub fn feature_grid(&self) -> Vec<f64> {
        (0..FEATURE_LEN).map(|i| self.v_min + self.width() * i as f64 / (FEATURE_LEN - 1) as f64).collect()
    }
}

/// Windowed full-cell discharge curve with `Q = 0` at `v_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullCellCurve {
    q: Vec<f64>,
    v: Vec<f64>,
    window: VoltageWindow,
}

impl FullCellCurve {
    pub fn new(q: Vec<f64>, v: Vec<f64>, window: VoltageWindow) -> Result<Self> {
        if q.len() != v.len() || q.len() < 2 {
            return Err(Error::Validation("curve needs at least two (q, v) samples of equal length".into()));
        }
        if q.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::Validation("non-finite curve sample".into()));
        }
        if q[0] != 0.0 {
            return Err(Error::Validation(format!("curve must start at q = 0, got {}", q[0])));
        }
        if q.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("q must be strictly increasing".into()));
        }
        if let Some(i) = v.windows(2).position(|w| !(w[0] - w[1] >= MIN_VOLTAGE_STEP)) {
            return Err(Error::Validation(format!(
                "v must be strictly decreasing (step below {MIN_VOLTAGE_STEP:e} V at q = {})",
                q[i + 1]
            )));
        }
        let tol = 1e-6;
        if v.iter().any(|&x| x < window.v_min - tol || x > window.v_max + tol) {
            return Err(Error::Validation("curve leaves the voltage window".into()));
        }
        Ok(Self { q, v, window })
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn window(&self) -> VoltageWindow {
        self.window
    }

    /// Capacity delivered across the window (mAh).
    pub fn usable_capacity(&self) -> f64 {
        *self.q.last().expect("non-empty")
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["q_mAh", "v_volts"])?;
        for (q, v) in self.q.iter().zip(&self.v) {
            w.write_record([format!("{q:e}"), format!("{v:e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>, window: VoltageWindow) -> Result<Self> {
        let (q, v) = read_two_columns(path.as_ref(), ["q_mAh", "v_volts"])?;
        Self::new(q, v, window)
    }
}

/// dQ/dV sampled on the fixed voltage grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCurve {
    pub v_grid: Vec<f64>,
    pub dqdv: Vec<f64>,
}

impl FeatureCurve {
    pub fn new(v_grid: Vec<f64>, dqdv: Vec<f64>) -> Result<Self> {
        if v_grid.len() != FEATURE_LEN || dqdv.len() != FEATURE_LEN {
            return Err(Error::Validation(format!("feature curves have exactly {FEATURE_LEN} points")));
        }
        if dqdv.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Validation("dQ/dV must be finite and non-negative".into()));
        }
        Ok(Self { v_grid, dqdv })
    }

    pub fn max(&self) -> f64 {
        self.dqdv.iter().copied().fold(0.0, f64::max)
    }

    /// Trapezoid integral over the grid (mAh).
    pub fn integral(&self) -> f64 {
        self.v_grid.windows(2).zip(self.dqdv.windows(2)).map(|(v, y)| 0.5 * (v[1] - v[0]) * (y[0] + y[1])).sum()
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["v_volts", "dqdv_mAh_per_V"])?;
        for (v, y) in self.v_grid.iter().zip(&self.dqdv) {
            w.write_record([format!("{v:e}"), format!("{y:e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let (v, y) = read_two_columns(path.as_ref(), ["v_volts", "dqdv_mAh_per_V"])?;
        Self::new(v, y)
    }
}

fn read_two_columns(path: &Path, header: [&str; 2]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let got: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if got != header {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`, found `{}`", header.join(","), got.join(",")),
        });
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if rec.len() != 2 {
            return Err(Error::Parse { line, message: format!("expected 2 fields, found {}", rec.len()) });
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse { line, message: format!("`{s}`: {e}") });
        a.push(parse(&rec[0])?);
        b.push(parse(&rec[1])?);
    }
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HealthParams {
    /// Usable capacity (mAh)
    pub q_cell: f64,
    pub m_p: f64,
    pub m_n: f64,
    /// Lithium inventory indicator (mAh)
    pub lii: f64,
}

impl HealthParams {
    pub const NAMES: [&'static str; 4] = ["q_cell", "m_p", "m_n", "lii"];

    pub fn to_array(&self) -> [f64; 4] {
        [self.q_cell, self.m_p, self.m_n, self.lii]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self { q_cell: a[0], m_p: a[1], m_n: a[2], lii: a[3] }
    }
}

/// Full-cell voltage at absolute capacity `q` (before re-origining).
#[inline]
pub fn cell_voltage(pair: &ElectrodePair, p: &HalfCellParams, q: f64) -> f64 {
    pair.pe.potential((q - p.delta_p) / p.m_p) - pair.ne.potential((q - p.delta_n) / p.m_n)
}

/// Absolute capacities where the curve crosses the window voltages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowCrossings {
    pub q_top: f64,
    pub q_bottom: f64,
}

impl WindowCrossings {
    pub fn usable_capacity(&self) -> f64 {
        self.q_bottom - self.q_top
    }
}

/// Finds the first downward crossings of `v_max` and then `v_min` by a coarse
/// scan followed by bisection.
pub fn locate_window(pair: &ElectrodePair, p: &HalfCellParams, window: VoltageWindow) -> Result<WindowCrossings> {
    p.validate()?;
    // Scan where both electrodes are sampled, plus a small extrapolation margin.
    let lo = p.delta_p.max(p.delta_n);
    let hi = (p.delta_p + p.m_p * pair.pe.q_max()).min(p.delta_n + p.m_n * pair.ne.q_max());
    if !(hi > lo) {
        return Err(Error::InfeasibleParameters("electrode capacity ranges do not overlap".into()));
    }
    let pad = SCAN_PAD * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let step = (hi - lo) / (SCAN_POINTS - 1) as f64;
    let f = |q: f64| cell_voltage(pair, p, q);

    if f(lo) <= window.v_max {
        return Err(Error::InfeasibleParameters(format!("curve never rises above v_max = {} V", window.v_max)));
    }
    let mut prev = (lo, f(lo));
    let mut top = None;
    let mut bottom = None;
    for i in 1..SCAN_POINTS {
        let q = lo + step * i as f64;
        let v = f(q);
        if !v.is_finite() {
            return Err(Error::InfeasibleParameters("non-finite cell voltage".into()));
        }
        if top.is_none() && v <= window.v_max {
            top = Some(bisect(&f, prev.0, q, window.v_max));
        }
        if let Some(t) = top.filter(|_| v <= window.v_min) {
            let a = if prev.1 > window.v_min { prev.0 } else { q - step };
            bottom = Some(bisect(&f, a.max(t), q, window.v_min));
            break;
        }
        prev = (q, v);
    }
    match (top, bottom) {
        (Some(q_top), Some(q_bottom)) if q_bottom > q_top => Ok(WindowCrossings { q_top, q_bottom }),
        (None, _) => Err(Error::InfeasibleParameters(format!("curve never reaches v_max = {} V", window.v_max))),
        _ => Err(Error::InfeasibleParameters(format!("curve never reaches v_min = {} V", window.v_min))),
    }
}

/// Bisection for `f(q) = target` on `[a, b]` with `f(a) > target >= f(b)`.
fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, target: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m) - target;
        if fm.abs() < VOLTAGE_TOL * 1e-3 {
            return m;
        }
        if fm > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Pseudo-OCV curve restricted to the window, sampled on `n_grid` uniform
/// capacity points.
pub fn reconstruct_ocv(
    pair: &ElectrodePair,
    p: &HalfCellParams,
    window: VoltageWindow,
    n_grid: usize,
) -> Result<FullCellCurve> {
    if n_grid < MIN_N_GRID {
        return Err(invalid(format!("n_grid must be at least {MIN_N_GRID}, got {n_grid}")));
    }
    let x = locate_window(pair, p, window)?;
    let qc = x.usable_capacity();
    let mut q = Vec::with_capacity(n_grid);
    let mut v = Vec::with_capacity(n_grid);
    for i in 0..n_grid {
        let qi = if i + 1 == n_grid { qc } else { qc * i as f64 / (n_grid - 1) as f64 };
        q.push(qi);
        v.push(cell_voltage(pair, p, x.q_top + qi).clamp(window.v_min, window.v_max));
    }
    v[0] = window.v_max;
    v[n_grid - 1] = window.v_min;
    FullCellCurve::new(q, v, window).map_err(|e| match e {
        Error::Validation(m) => Error::InfeasibleParameters(m),
        other => other,
    })
}

/// Shifts both slippages so that the upper window voltage sits at `Q = 0`.
pub fn canonicalize(pair: &ElectrodePair, p: &HalfCellParams, window: VoltageWindow) -> Result<HalfCellParams> {
    let x = locate_window(pair, p, window)?;
    if x.q_top.abs() <= CANONICAL_TOL {
        return Ok(*p);
    }
    Ok(p.shifted(-x.q_top))
}

/// `m_p · q_spec_pe - (δ_p - δ_n)`
pub fn lithium_inventory(pair: &ElectrodePair, p: &HalfCellParams) -> f64 {
    p.m_p * pair.q_spec_pe - (p.delta_p - p.delta_n)
}

pub fn health_params(pair: &ElectrodePair, p: &HalfCellParams, window: VoltageWindow) -> Result<HealthParams> {
    let x = locate_window(pair, p, window)?;
    Ok(HealthParams { q_cell: x.usable_capacity(), m_p: p.m_p, m_n: p.m_n, lii: lithium_inventory(pair, p) })
}

/// dV/dQ on the native grid: centered differences inside, one-sided at the
/// ends. Values are negative on a discharge curve.
pub fn differential_voltage(curve: &FullCellCurve) -> Vec<f64> {
    let (q, v) = (curve.q(), curve.v());
    let n = q.len();
    (0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                i if i == n - 1 => (n - 2, n - 1),
                i => (i - 1, i + 1),
            };
            (v[b] - v[a]) / (q[b] - q[a])
        })
        .collect()
}

/// dQ/dV on `grid`: the reciprocal of dV/dQ, carried to each grid voltage
/// through the monotone map Q(V).
pub fn incremental_capacity(curve: &FullCellCurve, grid: &[f64]) -> Result<FeatureCurve> {
    let w = curve.window();
    if grid.len() != FEATURE_LEN {
        return Err(invalid(format!("voltage grid must have {FEATURE_LEN} points")));
    }
    if grid.iter().any(|&g| g < w.v_min - 1e-12 || g > w.v_max + 1e-12) {
        return Err(invalid("voltage grid leaves the curve window"));
    }
    let dvdq = differential_voltage(curve);
    let ic: Vec<f64> = dvdq.iter().map(|d| -1.0 / d).collect();
    let (q, v) = (curve.q(), curve.v());
    let vq = MonotoneCubic::new(v.iter().rev().copied().collect(), q.iter().rev().copied().collect())?;
    let qc = curve.usable_capacity();
    let dqdv = grid
        .iter()
        .map(|&g| {
            let qg = vq.eval(g).clamp(0.0, qc);
            let k = q.partition_point(|&x| x <= qg).clamp(1, q.len() - 1);
            let t = (qg - q[k - 1]) / (q[k] - q[k - 1]);
            let y = ic[k - 1] + t * (ic[k] - ic[k - 1]);
            if y.is_finite() {
                y.max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    FeatureCurve::new(grid.to_vec(), dqdv)
}

/// Feature curve for a parameter set on the default grid.
pub fn feature_curve(pair: &ElectrodePair, p: &HalfCellParams, window: VoltageWindow) -> Result<FeatureCurve> {
    let curve = reconstruct_ocv(pair, p, window, DEFAULT_N_GRID)?;
    incremental_capacity(&curve, &window.feature_grid())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::electrode::{Electrode, ElectrodeCurve, SyntheticKind};

    fn linear_pair(q_end: f64) -> ElectrodePair {
        let q: Vec<f64> = (0..64).map(|i| q_end * i as f64 / 63.0).collect();
        let pe =
            ElectrodeCurve::new(Electrode::Positive, q.clone(), q.iter().map(|x| 4.3 - 0.004 * x).collect(), "lin")
                .unwrap();
        let ne =
            ElectrodeCurve::new(Electrode::Negative, q.clone(), q.iter().map(|x| 0.3 - 0.001 * x).collect(), "lin")
                .unwrap();
        ElectrodePair::new(pe, ne, 140.0, 350.0).unwrap()
    }

    fn unit() -> HalfCellParams {
        HalfCellParams::new(1.0, 1.0, 0.0, 0.0).unwrap()
    }

    #[test]
    fn flat_electrodes_are_infeasible() {
        let q: Vec<f64> = (0..16).map(|i| i as f64 * 10.0).collect();
        let pe = ElectrodeCurve::new(Electrode::Positive, q.clone(), vec![4.0; 16], "flat").unwrap();
        let ne = ElectrodeCurve::new(Electrode::Negative, q, vec![0.2; 16], "flat").unwrap();
        let pair = ElectrodePair::new(pe, ne, 140.0, 350.0).unwrap();
        let r = reconstruct_ocv(&pair, &HalfCellParams::fresh(), VoltageWindow::default(), 200);
        assert!(matches!(r, Err(Error::InfeasibleParameters(_))));
    }

    #[test]
    fn linear_electrodes_close_form() {
        let pair = linear_pair(300.0);
        let r = reconstruct_ocv(&pair, &unit(), VoltageWindow::default(), 200);
        assert!(matches!(r, Err(Error::InfeasibleParameters(_))));

        let w = VoltageWindow::new(3.4, 3.9).unwrap();
        let x = locate_window(&pair, &unit(), w).unwrap();
        assert!((x.q_top - 100.0 / 3.0).abs() < 1e-6);
        assert!((x.q_bottom - 200.0).abs() < 1e-6);
        let c = reconstruct_ocv(&pair, &unit(), w, 200).unwrap();
        assert!((c.usable_capacity() - 500.0 / 3.0).abs() < 1e-6);

        for d in differential_voltage(&c) {
            assert!((d + 0.003).abs() < 1e-12);
        }
        let f = incremental_capacity(&c, &w.feature_grid()).unwrap();
        for y in &f.dqdv {
            assert!((y - 1000.0 / 3.0).abs() < 1e-6, "{y}");
        }
    }

    #[test]
    fn lii_formula() {
        let pair = ElectrodePair::synthetic();
        let p = HalfCellParams::new(2.0, 1.0, 30.0, 10.0).unwrap();
        assert_eq!(lithium_inventory(&pair, &p), 260.0);
        let q = HalfCellParams::new(2.0, 1.0, 7.5, 7.5).unwrap();
        assert_eq!(lithium_inventory(&pair, &q), 2.0 * pair.q_spec_pe);
    }

    #[test]
    fn health_matches_reconstruction_exactly() {
        let pair = ElectrodePair::synthetic();
        let w = VoltageWindow::default();
        let p = HalfCellParams::fresh();
        let h = health_params(&pair, &p, w).unwrap();
        let c = reconstruct_ocv(&pair, &p, w, DEFAULT_N_GRID).unwrap();
        assert_eq!(h.q_cell.to_bits(), c.usable_capacity().to_bits());
        assert_eq!((h.m_p, h.m_n), (p.m_p, p.m_n));
    }

    #[test]
    fn usable_capacity_matches_dense_scan() {
        let pair = ElectrodePair::synthetic();
        let p = HalfCellParams::fresh();
        let w = VoltageWindow::default();
        let qc = health_params(&pair, &p, w).unwrap().q_cell;
        // Independent oracle: the closed-form electrodes on a 100k-point grid,
        // counting the capacity spent inside the window.
        let n = 100_000;
        let (lo, hi) = (-100.0, 500.0);
        let dq = (hi - lo) / n as f64;
        let v = |q: f64| {
            SyntheticKind::LcoLike.potential((q - p.delta_p) / p.m_p)
                - SyntheticKind::GraphiteLike.potential((q - p.delta_n) / p.m_n)
        };
        let inside: f64 = (0..n)
            .map(|i| {
                let (a, b) = (v(lo + i as f64 * dq), v(lo + (i + 1) as f64 * dq));
                let m = 0.5 * (a + b);
                if m <= w.v_max && m >= w.v_min {
                    dq
                } else {
                    0.0
                }
            })
            .sum();
        assert!((qc - inside).abs() / inside < 5e-4, "{qc} vs {inside}");
    }

    #[test]
    fn dvdq_matches_chain_rule() {
        let pair = ElectrodePair::synthetic();
        let p = HalfCellParams::fresh();
        let w = VoltageWindow::default();
        let c = reconstruct_ocv(&pair, &p, w, 4000).unwrap();
        let q_top = locate_window(&pair, &p, w).unwrap().q_top;
        let d = differential_voltage(&c);
        for i in (1..c.q().len() - 1).step_by(7) {
            let q = c.q()[i] + q_top;
            let exact = SyntheticKind::LcoLike.slope((q - p.delta_p) / p.m_p) / p.m_p
                - SyntheticKind::GraphiteLike.slope((q - p.delta_n) / p.m_n) / p.m_n;
            assert!(d[i] < 0.0);
            assert!((d[i] - exact).abs() <= 1e-4 * exact.abs(), "q={q} fd={} exact={exact}", d[i]);
        }
    }

    #[test]
    fn fresh_cell_conserves_capacity() {
        let pair = ElectrodePair::synthetic();
        let w = VoltageWindow::default();
        let p = HalfCellParams::fresh();
        let qc = health_params(&pair, &p, w).unwrap().q_cell;
        let f = feature_curve(&pair, &p, w).unwrap();
        assert!((f.integral() - qc).abs() / qc < 0.01, "{} vs {qc}", f.integral());
    }

    #[test]
    fn canonical_form_starts_at_v_max() {
        let pair = ElectrodePair::synthetic();
        let w = VoltageWindow::default();
        let c = canonicalize(&pair, &HalfCellParams::fresh(), w).unwrap();
        assert!((cell_voltage(&pair, &c, 0.0) - w.v_max).abs() < 1e-9);
        let again = canonicalize(&pair, &c, w).unwrap();
        assert!((again.delta_p - c.delta_p).abs() < 1e-9);
    }

    #[test]
    fn curve_csv_round_trip() {
        let pair = ElectrodePair::synthetic();
        let w = VoltageWindow::default();
        let c = reconstruct_ocv(&pair, &HalfCellParams::fresh(), w, 150).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        c.save_csv(f.path()).unwrap();
        assert_eq!(FullCellCurve::load_csv(f.path(), w).unwrap(), c);
        let fc = incremental_capacity(&c, &w.feature_grid()).unwrap();
        fc.save_csv(f.path()).unwrap();
        assert_eq!(FeatureCurve::load_csv(f.path()).unwrap(), fc);
    }
}
