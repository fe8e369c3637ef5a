//! One-stop dataset configuration: electrodes, aging schedule, simulation
//! grid and filter. [`Benchmark`] holds the generated data.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    filter_top_degradation, generate_trajectories, simulate_grid, AgingConfig, GridMethod, LabeledDataset,
    DEFAULT_GRID_POINTS, DEFAULT_GRID_SEED, DEFAULT_TOP_FRACTION,
};
use crate::electrode::{load_electrode_csv, Electrode, ElectrodePair, DEFAULT_Q_SPEC_NE, DEFAULT_Q_SPEC_PE};
use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::halfcell::{canonicalize, health_params, HealthParams, ParamBounds, VoltageWindow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElectrodeSource {
    /// Built-in pair name, used when no CSV paths are given.
    pub builtin: String,
    pub pe_csv: Option<PathBuf>,
    pub ne_csv: Option<PathBuf>,
    pub q_spec_pe: f64,
    pub q_spec_ne: f64,
}

impl Default for ElectrodeSource {
    fn default() -> Self {
        Self {
            builtin: "synthetic".into(),
            pe_csv: None,
            ne_csv: None,
            q_spec_pe: DEFAULT_Q_SPEC_PE,
            q_spec_ne: DEFAULT_Q_SPEC_NE,
        }
    }
}

impl ElectrodeSource {
    pub fn validate(&self) -> Result<()> {
        match (&self.pe_csv, &self.ne_csv) {
            (None, None) => ElectrodePair::builtin(&self.builtin).map(|_| ()),
            (Some(p), Some(n)) => {
                for f in [p, n] {
                    if !f.is_file() {
                        return Err(invalid(format!("electrode file {} does not exist", f.display())));
                    }
                }
                Ok(())
            }
            _ => Err(invalid("pe_csv and ne_csv must be given together")),
        }
    }

    pub fn load(&self) -> Result<ElectrodePair> {
        match (&self.pe_csv, &self.ne_csv) {
            (Some(p), Some(n)) => ElectrodePair::new(
                load_electrode_csv(p, Electrode::Positive)?,
                load_electrode_csv(n, Electrode::Negative)?,
                self.q_spec_pe,
                self.q_spec_ne,
            ),
            _ => ElectrodePair::builtin(&self.builtin),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub points: usize,
    /// Independent of the aging seed.
    pub seed: u64,
    pub method: GridMethod,
    pub bounds: ParamBounds,
    /// Per-parameter share of most-degraded records kept for PINN and augmentation.
    pub top_fraction: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: DEFAULT_GRID_POINTS,
            seed: DEFAULT_GRID_SEED,
            method: GridMethod::LatinHypercube,
            bounds: ParamBounds::default(),
            top_fraction: DEFAULT_TOP_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct DatasetConfig {
    pub electrodes: ElectrodeSource,
    pub window: VoltageWindow,
    pub aging: AgingConfig,
    pub grid: GridConfig,
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.electrodes.validate()?;
        VoltageWindow::new(self.window.v_min, self.window.v_max)?;
        self.aging.validate()?;
        self.grid.bounds.validate()?;
        if self.grid.points == 0 {
            return Err(invalid("grid.points must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.grid.top_fraction) {
            return Err(invalid("grid.top_fraction must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Generated experimental-like data and simulation grid.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub pair: Arc<ElectrodePair>,
    pub window: VoltageWindow,
    pub exp: LabeledDataset,
    pub sim: LabeledDataset,
    pub sim_top: LabeledDataset,
    /// Health parameters of the nominal fresh cell.
    pub fresh: HealthParams,
}

pub const EXP_FILE: &str = "experimental.csv";
pub const SIM_FILE: &str = "simulation.csv";

impl Benchmark {
    pub fn generate(cfg: &DatasetConfig, exec: Execution) -> Result<Self> {
        cfg.validate()?;
        let pair = cfg.electrodes.load()?;
        let exp = generate_trajectories(&pair, &cfg.aging, cfg.window, exec)?;
        let sim =
            simulate_grid(&pair, &cfg.grid.bounds, cfg.grid.points, cfg.grid.method, cfg.grid.seed, cfg.window, exec)?;
        Self::assemble(pair, cfg, exp, sim)
    }

    fn assemble(pair: ElectrodePair, cfg: &DatasetConfig, exp: LabeledDataset, sim: LabeledDataset) -> Result<Self> {
        let fresh = health_params(&pair, &canonicalize(&pair, &cfg.aging.fresh, cfg.window)?, cfg.window)?;
        let sim_top = filter_top_degradation(&sim, cfg.grid.top_fraction, &fresh);
        Ok(Self { pair: Arc::new(pair), window: cfg.window, exp, sim, sim_top, fresh })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.exp.write_csv(dir.join(EXP_FILE))?;
        self.sim.write_csv(dir.join(SIM_FILE))
    }

    /// Reads datasets written by [`save`](Self::save); the config supplies
    /// the electrodes and the filter.
    pub fn load(dir: &Path, cfg: &DatasetConfig) -> Result<Self> {
        cfg.validate()?;
        let exp = LabeledDataset::read_csv(dir.join(EXP_FILE), cfg.window)?;
        let sim = LabeledDataset::read_csv(dir.join(SIM_FILE), cfg.window)?;
        Self::assemble(cfg.electrodes.load()?, cfg, exp, sim)
    }
}
