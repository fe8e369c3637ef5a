//! Purely data-driven baselines trained on early-life experimental rows only.

use serde::{Deserialize, Serialize};

use super::delta::{EnetConfig, EnetSet};
use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::learners::{gpr_fit, net_train, Activation, DenseNet, GprControl, GprModel, KernelSpec, MseLoss};
use crate::learners::{TrainControl, TrainHistory};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineNet {
    /// dQ/dV → (q_cell, m_p, m_n, lii).
    pub net: DenseNet,
    pub history: TrainHistory,
}

impl BaselineNet {
    pub fn predict(&self, x: &Matrix) -> Matrix {
        self.net.predict(x)
    }
}

pub fn train_base_net(x: &Matrix, y: &Matrix, control: &TrainControl) -> Result<BaselineNet> {
    let net = DenseNet::new(&super::pinn::NET_LAYERS, Activation::Relu, control.seed)?;
    let (net, history) = net_train(net, x, y, &MseLoss, control)?;
    Ok(BaselineNet { net, history })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GprBaselineConfig {
    pub kernel: KernelSpec,
    pub nugget: f64,
}

impl Default for GprBaselineConfig {
    fn default() -> Self {
        Self { kernel: KernelSpec::matern32(1.0, 1.0), nugget: 0.007 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineGpr {
    pub models: Vec<GprModel>,
}

impl BaselineGpr {
    pub fn predict(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), self.models.len());
        for (t, m) in self.models.iter().enumerate() {
            for (i, v) in m.predict_mean(x).into_iter().enumerate() {
                out[(i, t)] = v;
            }
        }
        out
    }

    pub fn predict_variance(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), self.models.len());
        for (t, m) in self.models.iter().enumerate() {
            for (i, v) in m.predict(x).1.into_iter().enumerate() {
                out[(i, t)] = v;
            }
        }
        out
    }
}

pub fn train_base_gpr(x: &Matrix, y: &Matrix, cfg: &GprBaselineConfig, control: &GprControl) -> Result<BaselineGpr> {
    if x.rows() == 0 {
        return Err(invalid("GPR training set is empty"));
    }
    let inner = GprControl { execution: Execution::Sequential, ..*control };
    let fits = control.execution.map_range(y.cols(), |t| gpr_fit(x, &y.column(t), cfg.kernel, cfg.nugget, &inner));
    Ok(BaselineGpr { models: fits.into_iter().collect::<Result<_>>()? })
}

pub type BaselineEnet = EnetSet;

pub fn train_base_enet(x: &Matrix, y: &Matrix, cfg: &EnetConfig, exec: Execution) -> Result<BaselineEnet> {
    EnetSet::fit(x, y, cfg, exec)
}
