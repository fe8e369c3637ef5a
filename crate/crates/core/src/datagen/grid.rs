//! Low-fidelity simulation grids and the perturbation set for the half-cell
//! surrogate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CellRecord, Fidelity, LabeledDataset, Stage};
use crate::electrode::ElectrodePair;
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::halfcell::{
    canonicalize, detect_peaks, feature_curve, health_params, HalfCellParams, HealthParams, ParamBounds, PeakConfig,
    VoltageWindow,
};
use crate::sampling::{factorial, latin_hypercube, stream, truncated_normal};

/// Grid size that, added to 180 early-life rows, gives 964 training rows.
pub const DEFAULT_GRID_POINTS: usize = 784;

/// Per-parameter share kept by [`filter_top_degradation`]: nine records per
/// health parameter on the default grid.
pub const DEFAULT_TOP_FRACTION: f64 = 9.0 / 784.0;

/// Seed of the default simulation grid. With [`DEFAULT_TOP_FRACTION`] the
/// four per-parameter top sets overlap into a 32-record union, so the
/// filtered training mix is 180 + 32 = 212 rows.
pub const DEFAULT_GRID_SEED: u64 = 7;

const MIN_FEASIBLE_RATE: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMethod {
    #[default]
    LatinHypercube,
    Factorial,
}

struct Simulated {
    params: HalfCellParams,
    truth: HealthParams,
    dqdv: Vec<f64>,
}

fn simulate_one(pair: &ElectrodePair, raw: &HalfCellParams, window: VoltageWindow) -> Option<Simulated> {
    let params = canonicalize(pair, raw, window).ok()?;
    let truth = health_params(pair, &params, window).ok()?;
    let dqdv = feature_curve(pair, &params, window).ok()?.dqdv;
    Some(Simulated { params, truth, dqdv })
}

/// Noise-free records over `bounds`. Infeasible design points are replaced
/// by uniform redraws; more than 10% infeasible is an error.
pub fn simulate_grid(
    pair: &ElectrodePair,
    bounds: &ParamBounds,
    n_points: usize,
    method: GridMethod,
    seed: u64,
    window: VoltageWindow,
    exec: Execution,
) -> Result<LabeledDataset> {
    bounds.validate()?;
    if n_points == 0 {
        return Err(invalid("simulation grid needs at least one point"));
    }
    let mut rng = stream(seed, &[2]);
    let design = match method {
        GridMethod::LatinHypercube => latin_hypercube(n_points, 4, &mut rng),
        GridMethod::Factorial => factorial(n_points, 4),
    };
    let raw: Vec<HalfCellParams> = design.iter().map(|u| bounds.scale(u)).collect();
    let mut results: Vec<Option<Simulated>> = exec.map(&raw, |p| simulate_one(pair, p, window));
    let mut drawn = raw.len();
    let mut feasible = results.iter().filter(|r| r.is_some()).count();

    while results.iter().any(Option::is_none) {
        if (feasible as f64) < MIN_FEASIBLE_RATE * drawn as f64 {
            return Err(Error::WidenBounds { feasible, drawn });
        }
        let holes: Vec<usize> = (0..results.len()).filter(|&i| results[i].is_none()).collect();
        let redraw: Vec<HalfCellParams> =
            holes.iter().map(|_| bounds.scale(&(0..4).map(|_| rng.random::<f64>()).collect::<Vec<_>>())).collect();
        let fresh = exec.map(&redraw, |p| simulate_one(pair, p, window));
        drawn += redraw.len();
        for (i, r) in holes.into_iter().zip(fresh) {
            if r.is_some() {
                feasible += 1;
            }
            results[i] = r;
        }
    }
    if (feasible as f64) < MIN_FEASIBLE_RATE * drawn as f64 {
        return Err(Error::WidenBounds { feasible, drawn });
    }

    let records = results
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let s = r.expect("all holes filled");
            CellRecord {
                cell_id: i as u32 + 1,
                group_id: 0,
                rpt_index: 0,
                time_days: 0.0,
                params: s.params,
                truth: s.truth,
                dqdv: s.dqdv,
                fidelity: Fidelity::Simulation,
                stage: Stage::Late,
            }
        })
        .collect();
    LabeledDataset::new(window, records)
}

/// Union over the four health parameters of the `fraction` most degraded
/// records, where depth is the relative drop from `reference`.
pub fn filter_top_degradation(sim: &LabeledDataset, fraction: f64, reference: &HealthParams) -> LabeledDataset {
    let n = sim.len();
    let k = ((fraction.clamp(0.0, 1.0) * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n);
    let r = reference.to_array();
    let mut keep = vec![false; n];
    for t in 0..4 {
        let mut order: Vec<(f64, usize)> =
            sim.records.iter().enumerate().map(|(i, rec)| ((r[t] - rec.truth.to_array()[t]) / r[t], i)).collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in order.iter().take(k) {
            keep[i] = true;
        }
    }
    LabeledDataset {
        window: sim.window,
        v_grid: sim.v_grid.clone(),
        records: sim.records.iter().zip(keep).filter(|&(_rec, k)| k).map(|(rec, _k)| rec.clone()).collect(),
    }
}

/// One surrogate training example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSample {
    pub params: HalfCellParams,
    pub health: HealthParams,
    /// Top-two dQ/dV peak voltages, ascending.
    pub peaks: [f64; 2],
}

/// Health parameters and the two major peak voltages of a noise-free curve.
pub fn evaluate_sample(
    pair: &ElectrodePair,
    params: &HalfCellParams,
    window: VoltageWindow,
    peaks: &PeakConfig,
) -> Result<SurrogateSample> {
    let health = health_params(pair, params, window)?;
    let f = feature_curve(pair, params, window)?;
    let [a, b] = detect_peaks(&f, peaks)?.top_two()?;
    Ok(SurrogateSample { params: *params, health, peaks: [a.v_position, b.v_position] })
}

const MAX_REDRAWS: usize = 100;

/// Draws `n_per_center` samples around each center with every component
/// scaled by `1 + range_frac * z / 3`, `z` a standard normal truncated to
/// ±3. Draws that are infeasible or lose a peak are redrawn; centers that
/// cannot produce a valid draw are skipped.
pub fn perturb_for_surrogate(
    pair: &ElectrodePair,
    centers: &[HalfCellParams],
    range_frac: f64,
    n_per_center: usize,
    seed: u64,
    window: VoltageWindow,
    exec: Execution,
) -> Result<Vec<SurrogateSample>> {
    if n_per_center == 0 {
        return Err(invalid("n_per_center must be at least 1"));
    }
    if !(range_frac >= 0.0) {
        return Err(invalid("range_frac must be non-negative"));
    }
    let peaks = PeakConfig::default();
    let idx: Vec<usize> = (0..centers.len()).collect();
    let per_center = exec.map(&idx, |&c| {
        let mut rng = stream(seed, &[3, c as u64]);
        let center = centers[c].to_array();
        let mut out = Vec::with_capacity(n_per_center);
        for _ in 0..n_per_center {
            for _ in 0..MAX_REDRAWS {
                let mut p = center;
                for x in p.iter_mut() {
                    *x *= 1.0 + range_frac * truncated_normal(&mut rng, 3.0) / 3.0;
                }
                if let Ok(s) = evaluate_sample(pair, &HalfCellParams::from_array(p), window, &peaks) {
                    out.push(s);
                    break;
                }
            }
            if out.is_empty() {
                break;
            }
        }
        out
    });
    Ok(per_center.into_iter().flatten().collect())
}
