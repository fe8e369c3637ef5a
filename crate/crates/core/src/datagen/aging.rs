//! Per-cell degradation trajectories for the six synthetic aging groups.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CellRecord, Fidelity, LabeledDataset, Stage};
use crate::electrode::ElectrodePair;
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::halfcell::{canonicalize, feature_curve, health_params, lithium_inventory, HalfCellParams, VoltageWindow};
use crate::sampling::{standard_normal, stream, truncated_normal};

/// Test condition of one group. Only `multipliers` affects the data; the rest
/// are labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupCondition {
    pub label: String,
    pub charge_rate: String,
    pub discharge_rate: String,
    pub temperature_c: f64,
    pub cutoff_v: f64,
    /// Scales the base rates (a_p, a_n, b, c).
    pub multipliers: [f64; 4],
}

fn group(label: &str, discharge: &str, temp: f64, cutoff: f64, m: [f64; 4]) -> GroupCondition {
    GroupCondition {
        label: label.into(),
        charge_rate: "C/3".into(),
        discharge_rate: discharge.into(),
        temperature_c: temp,
        cutoff_v: cutoff,
        multipliers: m,
    }
}

/// Hotter and faster-discharge groups fade faster; the high-cutoff group
/// mainly stresses the positive electrode.
pub fn default_groups() -> Vec<GroupCondition> {
    vec![
        group("G1", "C/24", 37.0, 4.075, [1.0, 1.0, 1.0, 1.0]),
        group("G2", "C/24", 55.0, 4.075, [1.3, 1.2, 1.8, 1.6]),
        group("G3", "C/3", 37.0, 4.075, [1.5, 1.3, 1.1, 1.1]),
        group("G4", "C/3", 55.0, 4.075, [1.9, 1.6, 1.9, 1.8]),
        group("G5", "C/10", 37.0, 4.075, [1.2, 1.15, 1.05, 1.05]),
        group("G6", "C/24", 37.0, 4.175, [1.35, 1.1, 1.3, 1.2]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgingConfig {
    pub groups: Vec<GroupCondition>,
    pub cells_per_group: usize,
    pub rpt_count: usize,
    /// RPTs per cell labelled early-life.
    pub n_early: usize,
    pub duration_days: f64,
    /// Base end-of-test rates (a_p, a_n, b, c).
    pub base_rates: [f64; 4],
    /// Log-normal sigma of the per-cell rate jitter.
    pub rate_jitter: f64,
    /// Relative spread (1 sigma) of the initial half-cell parameters.
    pub initial_spread: f64,
    /// Feature noise sigma as a fraction of the curve maximum.
    pub noise: f64,
    pub fresh: HalfCellParams,
    pub seed: u64,
}

impl Default for AgingConfig {
    fn default() -> Self {
        Self {
            groups: default_groups(),
            cells_per_group: 4,
            rpt_count: 40,
            n_early: 10,
            duration_days: 600.0,
            base_rates: [0.15, 0.12, 0.12, -0.02],
            rate_jitter: 0.05,
            initial_spread: 0.01,
            noise: 0.01,
            fresh: HalfCellParams::fresh(),
            seed: 42,
        }
    }
}

const MAX_RETRIES: usize = 3;
const RETRY_DAMPING: f64 = 0.8;

impl AgingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() || self.cells_per_group == 0 {
            return Err(invalid("need at least one group and one cell per group"));
        }
        if self.rpt_count < 15 {
            return Err(invalid(format!("rpt_count must be at least 15, got {}", self.rpt_count)));
        }
        if self.n_early == 0 || self.n_early >= self.rpt_count {
            return Err(invalid("n_early must lie in 1..rpt_count"));
        }
        if self.groups.iter().any(|g| g.multipliers.iter().any(|m| !(*m > 0.0))) {
            return Err(invalid("group multipliers must be positive"));
        }
        if !(self.noise >= 0.0) || !(self.rate_jitter >= 0.0) || !(self.initial_spread >= 0.0) {
            return Err(invalid("noise and jitter levels must be non-negative"));
        }
        if !(self.duration_days > 0.0) {
            return Err(invalid("duration_days must be positive"));
        }
        self.fresh.validate()
    }

    pub fn n_cells(&self) -> usize {
        self.groups.len() * self.cells_per_group
    }
}

/// Half-cell parameters of one cell at normalized time `s = t / T`.
fn trajectory(p0: &HalfCellParams, rates: &[f64; 4], lii0: f64, s: f64) -> HalfCellParams {
    let [a_p, a_n, b, c] = *rates;
    HalfCellParams {
        m_p: p0.m_p * (1.0 - a_p * s.powf(0.8)),
        m_n: p0.m_n * (1.0 - a_n * s.powf(0.9)),
        delta_p: p0.delta_p + b * s.sqrt() * lii0,
        delta_n: p0.delta_n + c * s * lii0,
    }
}

fn generate_cell(
    pair: &ElectrodePair,
    cfg: &AgingConfig,
    window: VoltageWindow,
    group_idx: usize,
    cell_idx: usize,
) -> Result<Vec<CellRecord>> {
    let cell_id = (group_idx * cfg.cells_per_group + cell_idx + 1) as u32;
    let mut rng = stream(cfg.seed, &[1, group_idx as u64, cell_idx as u64]);
    let g = &cfg.groups[group_idx];
    let lii_fresh = lithium_inventory(pair, &cfg.fresh);

    let z = |rng: &mut crate::sampling::StreamRng| truncated_normal(rng, 3.0);
    let p0 = HalfCellParams {
        m_p: cfg.fresh.m_p * (1.0 + cfg.initial_spread * z(&mut rng)),
        m_n: cfg.fresh.m_n * (1.0 + cfg.initial_spread * z(&mut rng)),
        delta_p: cfg.fresh.delta_p + cfg.initial_spread * lii_fresh * z(&mut rng),
        delta_n: cfg.fresh.delta_n + cfg.initial_spread * lii_fresh * z(&mut rng),
    };
    let lii0 = lithium_inventory(pair, &p0);
    let mut rates = [0.0; 4];
    for k in 0..4 {
        rates[k] = cfg.base_rates[k] * g.multipliers[k] * (cfg.rate_jitter * standard_normal(&mut rng)).exp();
    }
    let noise_seed: u64 = rng.random();

    let mut last_err = None;
    for attempt in 0..=MAX_RETRIES {
        let damp = RETRY_DAMPING.powi(attempt as i32);
        let r = rates.map(|x| x * damp);
        match cell_records(pair, cfg, window, &p0, &r, lii0, cell_id, group_idx, noise_seed) {
            Ok(recs) => return Ok(recs),
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::Generation(format!(
        "cell {cell_id} stayed infeasible after {MAX_RETRIES} damped retries: {}",
        last_err.expect("at least one attempt")
    )))
}

#[allow(clippy::too_many_arguments)]
fn cell_records(
    pair: &ElectrodePair,
    cfg: &AgingConfig,
    window: VoltageWindow,
    p0: &HalfCellParams,
    rates: &[f64; 4],
    lii0: f64,
    cell_id: u32,
    group_idx: usize,
    noise_seed: u64,
) -> Result<Vec<CellRecord>> {
    let mut noise_rng = stream(noise_seed, &[]);
    let last = (cfg.rpt_count - 1) as f64;
    (0..cfg.rpt_count)
        .map(|k| {
            let s = k as f64 / last;
            let raw = trajectory(p0, rates, lii0, s);
            let params = canonicalize(pair, &raw, window)?;
            let truth = health_params(pair, &params, window)?;
            let mut dqdv = feature_curve(pair, &params, window)?.dqdv;
            let sigma = cfg.noise * dqdv.iter().copied().fold(0.0, f64::max);
            for y in dqdv.iter_mut() {
                *y = (*y + sigma * standard_normal(&mut noise_rng)).max(0.0);
            }
            Ok(CellRecord {
                cell_id,
                group_id: group_idx as u32 + 1,
                rpt_index: k as u32,
                time_days: cfg.duration_days * s,
                params,
                truth,
                dqdv,
                fidelity: Fidelity::ExperimentalSynthetic,
                stage: if k < cfg.n_early { Stage::Early } else { Stage::Late },
            })
        })
        .collect()
}

/// Generates every cell's RPT series. Output order is (group, cell, rpt)
/// whatever the execution mode.
pub fn generate_trajectories(
    pair: &ElectrodePair,
    cfg: &AgingConfig,
    window: VoltageWindow,
    exec: Execution,
) -> Result<LabeledDataset> {
    cfg.validate()?;
    let cells: Vec<(usize, usize)> =
        (0..cfg.groups.len()).flat_map(|g| (0..cfg.cells_per_group).map(move |c| (g, c))).collect();
    let per_cell = exec.map(&cells, |&(g, c)| generate_cell(pair, cfg, window, g, c));
    let mut records = Vec::with_capacity(cells.len() * cfg.rpt_count);
    for r in per_cell {
        records.extend(r?);
    }
    LabeledDataset::new(window, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> AgingConfig {
        AgingConfig {
            groups: default_groups()[..2].to_vec(),
            cells_per_group: 2,
            rpt_count: 15,
            n_early: 5,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_ordered() {
        let pair = ElectrodePair::synthetic();
        let w = VoltageWindow::default();
        let a = generate_trajectories(&pair, &small(), w, Execution::Parallel).unwrap();
        let b = generate_trajectories(&pair, &small(), w, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4 * 15);
        assert_eq!(a.records.iter().filter(|r| r.stage == Stage::Early).count(), 4 * 5);
        let ids: Vec<u32> = a.records.iter().map(|r| r.cell_id).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn capacity_fades() {
        let pair = ElectrodePair::synthetic();
        let ds = generate_trajectories(&pair, &small(), VoltageWindow::default(), Execution::Sequential).unwrap();
        for id in ds.cell_ids() {
            let cell: Vec<_> = ds.records.iter().filter(|r| r.cell_id == id).collect();
            assert!(cell[0].truth.q_cell > cell.last().unwrap().truth.q_cell);
        }
    }

    #[test]
    fn rejects_short_schedules() {
        let cfg = AgingConfig { rpt_count: 10, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
