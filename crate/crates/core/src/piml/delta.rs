//! Elastic-net methods: delta learning (simulation-trained estimator plus a
//! residual corrector) and training-set augmentation with simulation rows.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::learners::{enet_fit, ElasticNetModel, EnetControl};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnetConfig {
    pub alpha: f64,
    pub l1_ratio: f64,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for EnetConfig {
    fn default() -> Self {
        let c = EnetControl::default();
        Self { alpha: 1e-3, l1_ratio: 0.5, tol: c.tol, max_sweeps: c.max_sweeps }
    }
}

impl EnetConfig {
    fn control(&self) -> EnetControl {
        EnetControl { tol: self.tol, max_sweeps: self.max_sweeps }
    }
}

/// One elastic net per target column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnetSet {
    pub models: Vec<ElasticNetModel>,
}

impl EnetSet {
    pub fn fit(x: &Matrix, y: &Matrix, cfg: &EnetConfig, exec: Execution) -> Result<Self> {
        if x.rows() == 0 {
            return Err(invalid("elastic net training set is empty"));
        }
        let control = cfg.control();
        let fits = exec.map_range(y.cols(), |t| enet_fit(x, &y.column(t), cfg.alpha, cfg.l1_ratio, &control));
        Ok(Self { models: fits.into_iter().collect::<Result<_>>()? })
    }

    pub fn predict(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), self.models.len());
        for (t, m) in self.models.iter().enumerate() {
            for (i, v) in m.predict(x).into_iter().enumerate() {
                out[(i, t)] = v;
            }
        }
        out
    }

    pub fn converged(&self) -> bool {
        self.models.iter().all(|m| m.converged)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaEnetModel {
    pub estimator: EnetSet,
    pub corrector: EnetSet,
    /// Rows seen by the estimator and the corrector.
    pub rows: [usize; 2],
}

impl DeltaEnetModel {
    pub fn predict(&self, x: &Matrix) -> Matrix {
        let mut y = self.estimator.predict(x);
        let c = self.corrector.predict(x);
        for (a, b) in y.as_mut_slice().iter_mut().zip(c.as_slice()) {
            *a += b;
        }
        y
    }

    pub fn exposure(&self) -> usize {
        self.rows[0] + self.rows[1]
    }
}

/// Estimator on the simulation rows, corrector on the experimental residuals.
pub fn train_delta_enet(
    x_exp: &Matrix,
    y_exp: &Matrix,
    x_sim: &Matrix,
    y_sim: &Matrix,
    cfg: &EnetConfig,
    exec: Execution,
) -> Result<DeltaEnetModel> {
    let estimator = EnetSet::fit(x_sim, y_sim, cfg, exec)?;
    fit_corrector(estimator, x_exp, y_exp, x_sim.rows(), cfg, exec)
}

pub(crate) fn fit_corrector(
    estimator: EnetSet,
    x_exp: &Matrix,
    y_exp: &Matrix,
    sim_rows: usize,
    cfg: &EnetConfig,
    exec: Execution,
) -> Result<DeltaEnetModel> {
    let mut resid = y_exp.clone();
    for (a, b) in resid.as_mut_slice().iter_mut().zip(estimator.predict(x_exp).as_slice()) {
        *a -= b;
    }
    let corrector = EnetSet::fit(x_exp, &resid, cfg, exec)?;
    Ok(DeltaEnetModel { estimator, corrector, rows: [sim_rows, x_exp.rows()] })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentedEnet {
    pub model: EnetSet,
    pub rows: usize,
}

impl AugmentedEnet {
    pub fn predict(&self, x: &Matrix) -> Matrix {
        self.model.predict(x)
    }
}

/// Elastic net on the experimental rows followed by the simulation rows.
pub fn train_augmented(
    x_exp: &Matrix,
    y_exp: &Matrix,
    x_sim: &Matrix,
    y_sim: &Matrix,
    cfg: &EnetConfig,
    exec: Execution,
) -> Result<AugmentedEnet> {
    if x_sim.rows() > 0 && (x_sim.cols() != x_exp.cols() || y_sim.cols() != y_exp.cols()) {
        return Err(invalid("simulation and experimental rows have different widths"));
    }
    let mut xd = x_exp.as_slice().to_vec();
    xd.extend_from_slice(x_sim.as_slice());
    let mut yd = y_exp.as_slice().to_vec();
    yd.extend_from_slice(y_sim.as_slice());
    let n = x_exp.rows() + x_sim.rows();
    let x = Matrix::from_vec(n, x_exp.cols(), xd);
    let y = Matrix::from_vec(n, y_exp.cols(), yd);
    Ok(AugmentedEnet { model: EnetSet::fit(&x, &y, cfg, exec)?, rows: n })
}
