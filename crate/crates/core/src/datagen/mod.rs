//! Synthetic aging data: cell trajectories standing in for the measured
//! experiment, low-fidelity simulation grids, the surrogate training set, and
//! cross-validation folds.

mod aging;
mod config;
mod folds;
mod grid;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::halfcell::{FeatureCurve, HalfCellParams, HealthParams, VoltageWindow, FEATURE_LEN};
use crate::linalg::Matrix;

pub use aging::{default_groups, generate_trajectories, AgingConfig, GroupCondition};
pub use config::{Benchmark, DatasetConfig, ElectrodeSource, GridConfig, EXP_FILE, SIM_FILE};
pub use folds::{make_folds, Fold, FoldPlan};
pub use grid::{
    evaluate_sample, filter_top_degradation, perturb_for_surrogate, simulate_grid, GridMethod, SurrogateSample,
    DEFAULT_GRID_POINTS, DEFAULT_GRID_SEED, DEFAULT_TOP_FRACTION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fidelity {
    ExperimentalSynthetic,
    Simulation,
}

impl Fidelity {
    pub fn as_str(self) -> &'static str {
        match self {
            Fidelity::ExperimentalSynthetic => "experimental_synthetic",
            Fidelity::Simulation => "simulation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Early,
    Late,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Early => "early",
            Stage::Late => "late",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub cell_id: u32,
    /// 1-based aging group; 0 for simulation records.
    pub group_id: u32,
    pub rpt_index: u32,
    pub time_days: f64,
    /// Canonical half-cell parameters.
    pub params: HalfCellParams,
    pub truth: HealthParams,
    /// dQ/dV on the dataset's voltage grid.
    pub dqdv: Vec<f64>,
    pub fidelity: Fidelity,
    pub stage: Stage,
}

impl CellRecord {
    /// Unique key within a dataset.
    pub fn key(&self) -> (u32, u32, Fidelity) {
        (self.cell_id, self.rpt_index, self.fidelity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub window: VoltageWindow,
    pub v_grid: Vec<f64>,
    pub records: Vec<CellRecord>,
}

const META_COLUMNS: [&str; 12] =
    ["cell_id", "group_id", "rpt_index", "stage", "fidelity", "time_days", "mp", "mn", "dp", "dn", "q_cell", "lii"];

impl LabeledDataset {
    pub fn new(window: VoltageWindow, records: Vec<CellRecord>) -> Result<Self> {
        let ds = Self { window, v_grid: window.feature_grid(), records };
        ds.validate()?;
        Ok(ds)
    }

    pub fn empty(window: VoltageWindow) -> Self {
        Self { window, v_grid: window.feature_grid(), records: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.v_grid.len() != FEATURE_LEN {
            return Err(Error::Validation("dataset grid must have 100 points".into()));
        }
        let mut seen = HashSet::new();
        for r in &self.records {
            if r.dqdv.len() != FEATURE_LEN {
                return Err(Error::Validation(format!("record {:?} has {} features", r.key(), r.dqdv.len())));
            }
            if !seen.insert(r.key()) {
                return Err(Error::Validation(format!("duplicate record {:?}", r.key())));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records passing `keep`, same grid.
    pub fn filter(&self, keep: impl Fn(&CellRecord) -> bool) -> LabeledDataset {
        LabeledDataset {
            window: self.window,
            v_grid: self.v_grid.clone(),
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn feature_curve(&self, i: usize) -> FeatureCurve {
        FeatureCurve { v_grid: self.v_grid.clone(), dqdv: self.records[i].dqdv.clone() }
    }

    /// N × 100 feature matrix.
    pub fn features(&self) -> Matrix {
        Matrix::from_rows(&self.records.iter().map(|r| r.dqdv.as_slice()).collect::<Vec<_>>())
    }

    /// N × 4 health targets (q_cell, m_p, m_n, lii).
    pub fn targets(&self) -> Matrix {
        Matrix::from_rows(&self.records.iter().map(|r| r.truth.to_array()).collect::<Vec<_>>())
    }

    /// N × 4 half-cell parameters (m_p, m_n, δ_p, δ_n).
    pub fn halfcell_targets(&self) -> Matrix {
        Matrix::from_rows(&self.records.iter().map(|r| r.params.to_array()).collect::<Vec<_>>())
    }

    /// Distinct experimental cell ids in order of first appearance.
    pub fn cell_ids(&self) -> Vec<u32> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| r.fidelity == Fidelity::ExperimentalSynthetic && seen.insert(r.cell_id))
            .map(|r| r.cell_id)
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = META_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend((0..FEATURE_LEN).map(|i| format!("f{i:03}")));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.cell_id.to_string(),
                r.group_id.to_string(),
                r.rpt_index.to_string(),
                r.stage.as_str().to_string(),
                r.fidelity.as_str().to_string(),
            ];
            let nums = [
                r.time_days,
                r.params.m_p,
                r.params.m_n,
                r.params.delta_p,
                r.params.delta_n,
                r.truth.q_cell,
                r.truth.lii,
            ];
            row.extend(nums.iter().chain(&r.dqdv).map(|x| format!("{x:e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a dataset written by [`write_csv`](Self::write_csv).
    pub fn read_csv(path: impl AsRef<Path>, window: VoltageWindow) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let header = reader.headers()?.clone();
        let expected: Vec<String> =
            META_COLUMNS.iter().map(|s| s.to_string()).chain((0..FEATURE_LEN).map(|i| format!("f{i:03}"))).collect();
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Parse { line: 1, message: "unexpected dataset header".into() });
        }
        let mut records = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
            let err = |m: String| Error::Parse { line, message: m };
            let int = |k: usize| rec[k].parse::<u32>().map_err(|e| err(format!("{}: {e}", META_COLUMNS[k])));
            let num = |k: usize| rec[k].parse::<f64>().map_err(|e| err(format!("column {k}: {e}")));
            let stage = match &rec[3] {
                "early" => Stage::Early,
                "late" => Stage::Late,
                s => return Err(err(format!("unknown stage `{s}`"))),
            };
            let fidelity = match &rec[4] {
                "experimental_synthetic" => Fidelity::ExperimentalSynthetic,
                "simulation" => Fidelity::Simulation,
                s => return Err(err(format!("unknown fidelity `{s}`"))),
            };
            let params = HalfCellParams { m_p: num(6)?, m_n: num(7)?, delta_p: num(8)?, delta_n: num(9)? };
            records.push(CellRecord {
                cell_id: int(0)?,
                group_id: int(1)?,
                rpt_index: int(2)?,
                time_days: num(5)?,
                truth: HealthParams { q_cell: num(10)?, m_p: params.m_p, m_n: params.m_n, lii: num(11)? },
                params,
                dqdv: (0..FEATURE_LEN).map(|k| num(12 + k)).collect::<Result<_>>()?,
                fidelity,
                stage,
            });
        }
        Self::new(window, records)
    }
}
