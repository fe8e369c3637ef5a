//! Reference half-cell potential curves for the positive (PE) and negative
//! (NE) electrodes.
//!
//! A curve maps specific capacity `q` (mAh/g) to potential vs. Li/Li+ (V).
//! The PE axis is lithiation during full-cell discharge, so its potential
//! falls with `q`. The built-in NE uses the delithiation axis, so its
//! potential rises with `q`; user-supplied NE curves may be monotone in
//! either direction.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::interp::MonotoneCubic;

pub const MIN_CURVE_POINTS: usize = 16;
pub const MIN_SYNTHETIC_POINTS: usize = 64;
/// Samples used for the built-in electrode pair.
pub const DEFAULT_SYNTHETIC_POINTS: usize = 4096;
pub const CSV_HEADER: [&str; 2] = ["q_mAh_per_g", "v_volts"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Electrode {
    #[serde(rename = "PE")]
    Positive,
    #[serde(rename = "NE")]
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeCurve {
    electrode: Electrode,
    label: String,
    interp: MonotoneCubic,
}

impl ElectrodeCurve {
    pub fn new(electrode: Electrode, q: Vec<f64>, v: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        validate(electrode, &q, &v)?;
        let interp = MonotoneCubic::new(q, v)?;
        Ok(Self { electrode, label: label.into(), interp })
    }

    pub fn electrode(&self) -> Electrode {
        self.electrode
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn q(&self) -> &[f64] {
        self.interp.knots().0
    }

    pub fn v(&self) -> &[f64] {
        self.interp.knots().1
    }

    pub fn q_max(&self) -> f64 {
        *self.q().last().expect("validated curve is non-empty")
    }

    /// Potential at any specific capacity; linear extrapolation outside the
    /// sampled range.
    pub fn potential(&self, q: f64) -> f64 {
        self.interp.eval(q)
    }

    /// dV/dq of the interpolant.
    pub fn slope(&self, q: f64) -> f64 {
        self.interp.derivative(q)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(CSV_HEADER)?;
        for (q, v) in self.q().iter().zip(self.v()) {
            w.write_record([format!("{q:e}"), format!("{v:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn validate(electrode: Electrode, q: &[f64], v: &[f64]) -> Result<()> {
    if q.len() != v.len() {
        return Err(Error::Validation("q and v differ in length".into()));
    }
    if q.len() < MIN_CURVE_POINTS {
        return Err(Error::Validation(format!("curve has {} points, need at least {MIN_CURVE_POINTS}", q.len())));
    }
    if q.iter().chain(v).any(|x| !x.is_finite()) {
        return Err(Error::Validation("non-finite sample".into()));
    }
    if q[0] != 0.0 {
        return Err(Error::Validation(format!("curve must start at q = 0, got {}", q[0])));
    }
    if let Some(w) = q.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::Validation(format!("q not strictly increasing at q = {}", w[1])));
    }
    let non_increasing = v.windows(2).all(|w| w[1] <= w[0]);
    let non_decreasing = v.windows(2).all(|w| w[1] >= w[0]);
    match electrode {
        Electrode::Positive if !non_increasing => {
            Err(Error::Validation("PE potential must be non-increasing in q".into()))
        }
        Electrode::Negative if !(non_increasing || non_decreasing) => {
            Err(Error::Validation("NE potential must be monotone in q".into()))
        }
        _ => Ok(()),
    }
}

/// Analytic stand-ins for measured half-cell data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    LcoLike,
    GraphiteLike,
}

// LCO-like PE on [0, 150] mAh/g: exponential knee near full charge, linear
// body, and a steep end-of-lithiation tail.
const PE_Q_MAX: f64 = 150.0;
const PE_V0: f64 = 4.32;
const PE_KNEE_DEPTH: f64 = 0.294;
const PE_KNEE_SCALE: f64 = 22.4;
const PE_LINEAR: f64 = 0.00242;
const PE_TAIL_DEPTH: f64 = 0.30;
const PE_TAIL_SCALE: f64 = 5.0;

// Graphite-like NE on [0, 350] mAh/g (delithiation axis): a linear ramp plus
// three logistic steps. The plateaus between the steps give the two dominant
// full-cell dQ/dV peaks inside 3.4-4.075 V; the last step is the
// end-of-delithiation rise.
const NE_Q_MAX: f64 = 350.0;
const NE_V0: f64 = 0.06;
const NE_LINEAR: f64 = 0.00013;
const NE_STEPS: [(f64, f64, f64); 3] = [
    // (height V, centre mAh/g, width mAh/g)
    (0.053, 45.0, 10.5),
    (0.054, 218.0, 5.2),
    (0.35, 284.0, 6.0),
];

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl SyntheticKind {
    pub fn electrode(self) -> Electrode {
        match self {
            SyntheticKind::LcoLike => Electrode::Positive,
            SyntheticKind::GraphiteLike => Electrode::Negative,
        }
    }

    pub fn q_max(self) -> f64 {
        match self {
            SyntheticKind::LcoLike => PE_Q_MAX,
            SyntheticKind::GraphiteLike => NE_Q_MAX,
        }
    }

    /// Closed-form potential.
    pub fn potential(self, q: f64) -> f64 {
        match self {
            SyntheticKind::LcoLike => {
                PE_V0
                    - PE_KNEE_DEPTH * (1.0 - (-q / PE_KNEE_SCALE).exp())
                    - PE_LINEAR * q
                    - PE_TAIL_DEPTH * ((q - PE_Q_MAX) / PE_TAIL_SCALE).exp()
            }
            SyntheticKind::GraphiteLike => {
                NE_V0 + NE_LINEAR * q + NE_STEPS.iter().map(|&(h, c, w)| h * logistic((q - c) / w)).sum::<f64>()
            }
        }
    }

    /// Closed-form dV/dq.
    pub fn slope(self, q: f64) -> f64 {
        match self {
            SyntheticKind::LcoLike => {
                -PE_KNEE_DEPTH / PE_KNEE_SCALE * (-q / PE_KNEE_SCALE).exp()
                    - PE_LINEAR
                    - PE_TAIL_DEPTH / PE_TAIL_SCALE * ((q - PE_Q_MAX) / PE_TAIL_SCALE).exp()
            }
            SyntheticKind::GraphiteLike => {
                NE_LINEAR
                    + NE_STEPS
                        .iter()
                        .map(|&(h, c, w)| {
                            let s = logistic((q - c) / w);
                            h / w * s * (1.0 - s)
                        })
                        .sum::<f64>()
            }
        }
    }
}

/// Samples the analytic form on `n_points` uniform knots.
pub fn synthetic_electrode(kind: SyntheticKind, n_points: usize) -> Result<ElectrodeCurve> {
    if n_points < MIN_SYNTHETIC_POINTS {
        return Err(invalid(format!(
            "synthetic electrode needs at least {MIN_SYNTHETIC_POINTS} points, got {n_points}"
        )));
    }
    let q_max = kind.q_max();
    let q: Vec<f64> = (0..n_points).map(|i| q_max * i as f64 / (n_points - 1) as f64).collect();
    let v = q.iter().map(|&x| kind.potential(x)).collect();
    let label = match kind {
        SyntheticKind::LcoLike => "synthetic:lco_like",
        SyntheticKind::GraphiteLike => "synthetic:graphite_like",
    };
    ElectrodeCurve::new(kind.electrode(), q, v, label)
}

/// Reads a `q_mAh_per_g,v_volts` CSV. Rows are sorted by `q`; duplicate `q`
/// values are rejected.
pub fn load_electrode_csv(path: impl AsRef<Path>, electrode: Electrode) -> Result<ElectrodeCurve> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`, found `{}`", CSV_HEADER.join(","), got.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if rec.len() != 2 {
            return Err(Error::Parse { line, message: format!("expected 2 fields, found {}", rec.len()) });
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse { line, message: format!("`{s}`: {e}") });
        rows.push((parse(&rec[0])?, parse(&rec[1])?));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Validation(format!("duplicate q = {}", w[0].0)));
    }
    let (q, v) = rows.into_iter().unzip();
    let label = format!("csv:{}", path.display());
    ElectrodeCurve::new(electrode, q, v, label)
}

/// PE and NE curves plus the nominal specific capacities used for LII.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodePair {
    pub pe: ElectrodeCurve,
    pub ne: ElectrodeCurve,
    /// mAh/g
    pub q_spec_pe: f64,
    /// mAh/g
    pub q_spec_ne: f64,
}

pub const DEFAULT_Q_SPEC_PE: f64 = 140.0;
pub const DEFAULT_Q_SPEC_NE: f64 = 350.0;

impl ElectrodePair {
    pub fn new(pe: ElectrodeCurve, ne: ElectrodeCurve, q_spec_pe: f64, q_spec_ne: f64) -> Result<Self> {
        if pe.electrode() != Electrode::Positive || ne.electrode() != Electrode::Negative {
            return Err(Error::Validation("pair must be (PE, NE)".into()));
        }
        if !(q_spec_pe > 0.0 && q_spec_ne > 0.0) {
            return Err(invalid("specific capacities must be positive"));
        }
        Ok(Self { pe, ne, q_spec_pe, q_spec_ne })
    }

    /// Built-in LCO-like / graphite-like pair.
    pub fn synthetic() -> Self {
        let pe = synthetic_electrode(SyntheticKind::LcoLike, DEFAULT_SYNTHETIC_POINTS).expect("static size");
        let ne = synthetic_electrode(SyntheticKind::GraphiteLike, DEFAULT_SYNTHETIC_POINTS).expect("static size");
        Self { pe, ne, q_spec_pe: DEFAULT_Q_SPEC_PE, q_spec_ne: DEFAULT_Q_SPEC_NE }
    }

    /// Resolves a built-in pair by name.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "synthetic" | "lco_graphite" => Ok(Self::synthetic()),
            other => Err(invalid(format!("unknown built-in electrode pair `{other}` (known: synthetic)"))),
        }
    }
}
