//! Physics-informed estimators and their data-driven baselines.

mod baselines;
mod cokriging;
mod delta;
mod pinn;
mod surrogate;

use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::datagen::LabeledDataset;
use crate::electrode::ElectrodePair;
use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::learners::{GprControl, TrainControl};
use crate::linalg::Matrix;

pub use baselines::{
    train_base_enet, train_base_gpr, train_base_net, BaselineEnet, BaselineGpr, BaselineNet, GprBaselineConfig,
};
pub use cokriging::{train_cokriging, CoKrigingConfig, CoKrigingModel, LowFidelity};
pub use delta::{train_augmented, train_delta_enet, AugmentedEnet, DeltaEnetModel, EnetConfig, EnetSet};
pub use pinn::{train_pinn, LossWeights, PinnLoss, PinnModel, PinnTargets, NET_LAYERS};
pub use surrogate::{train_surrogate, SurrogateControl, SurrogateHc, SurrogateReport, SURROGATE_OUTPUTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pinn,
    Cokriging,
    DeltaEnet,
    Augmented,
    BaseNet,
    BaseGpr,
    BaseEnet,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Pinn,
        Method::Cokriging,
        Method::DeltaEnet,
        Method::Augmented,
        Method::BaseNet,
        Method::BaseGpr,
        Method::BaseEnet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pinn => "pinn",
            Method::Cokriging => "cokriging",
            Method::DeltaEnet => "delta_enet",
            Method::Augmented => "augmented",
            Method::BaseNet => "base_net",
            Method::BaseGpr => "base_gpr",
            Method::BaseEnet => "base_enet",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|m| m.name()).collect();
            invalid(format!("unknown method `{s}` (expected one of {})", names.join(", ")))
        })
    }

    pub fn is_physics_informed(self) -> bool {
        matches!(self, Method::Pinn | Method::Cokriging | Method::DeltaEnet | Method::Augmented)
    }

    /// The data-driven model each physics-informed method is compared with.
    pub fn baseline(self) -> Method {
        match self {
            Method::Pinn | Method::BaseNet => Method::BaseNet,
            Method::Cokriging | Method::BaseGpr => Method::BaseGpr,
            Method::DeltaEnet | Method::Augmented | Method::BaseEnet => Method::BaseEnet,
        }
    }

    /// Experimental and simulation rows seen in training.
    pub fn composition(self, n_exp: usize, n_sim: usize, n_top: usize, augment_full_grid: bool) -> (usize, usize) {
        match self {
            Method::Pinn => (n_exp, n_top),
            Method::Augmented => (n_exp, if augment_full_grid { n_sim } else { n_top }),
            Method::Cokriging | Method::DeltaEnet => (n_exp, n_sim),
            Method::BaseNet | Method::BaseGpr | Method::BaseEnet => (n_exp, 0),
        }
    }

    /// Whether retraining with another seed can change the model.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Method::Pinn | Method::BaseNet)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodConfig {
    /// Training control of the 100→60→60→4 networks (PINN core and baseline).
    pub net: TrainControl,
    /// PINN loss-weight ratios (r1, r2, r3).
    pub pinn_ratios: [f64; 3],
    pub surrogate: SurrogateControl,
    pub cokriging: CoKrigingConfig,
    pub gpr_baseline: GprBaselineConfig,
    pub gpr: GprControl,
    pub enet: EnetConfig,
    /// Augment with the whole simulation grid instead of the filtered rows.
    pub augment_full_grid: bool,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            net: TrainControl::default(),
            pinn_ratios: [1.0 / 3.0; 3],
            surrogate: SurrogateControl::default(),
            cokriging: CoKrigingConfig::default(),
            gpr_baseline: GprBaselineConfig::default(),
            gpr: GprControl::default(),
            enet: EnetConfig::default(),
            augment_full_grid: false,
        }
    }
}

impl MethodConfig {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.surrogate.train.validate()?;
        LossWeights::from_ratios(self.pinn_ratios)?;
        self.cokriging.kernel_low.validate()?;
        self.cokriging.kernel_delta.validate()?;
        self.gpr_baseline.kernel.validate()?;
        for n in [self.cokriging.nugget_low, self.cokriging.nugget_delta, self.gpr_baseline.nugget] {
            if !(n > 0.0) {
                return Err(invalid(format!("nuggets must be positive, got {n}")));
            }
        }
        if !(self.enet.alpha >= 0.0) || !(0.0..=1.0).contains(&self.enet.l1_ratio) {
            return Err(invalid("enet alpha must be ≥ 0 and l1_ratio in [0, 1]"));
        }
        Ok(())
    }
}

/// Models that depend only on the simulation grid and the electrode pair,
/// built on first use and shared by every fold and repeat.
#[derive(Default)]
pub struct SharedModels {
    surrogate: Mutex<Option<Arc<SurrogateHc>>>,
    low: Mutex<Option<Arc<LowFidelity>>>,
    estimator: Mutex<Option<Arc<EnetSet>>>,
}

fn cached<T>(slot: &Mutex<Option<Arc<T>>>, build: impl FnOnce() -> Result<T>) -> Result<Arc<T>> {
    let mut g = slot.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(v) = g.as_ref() {
        return Ok(v.clone());
    }
    let v = Arc::new(build()?);
    *g = Some(v.clone());
    Ok(v)
}

impl SharedModels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn surrogate(&self, data: &TrainingData, cfg: &MethodConfig) -> Result<Arc<SurrogateHc>> {
        cached(&self.surrogate, || {
            let centers: Vec<_> = data.sim.records.iter().map(|r| r.params).collect();
            train_surrogate(&data.pair, &centers, data.sim.window, &cfg.surrogate, data.exec)
        })
    }

    pub fn low_fidelity(&self, data: &TrainingData, cfg: &MethodConfig) -> Result<Arc<LowFidelity>> {
        cached(&self.low, || {
            let gpr = GprControl { execution: data.exec, ..cfg.gpr };
            LowFidelity::fit(
                &data.sim.features(),
                &data.sim.targets(),
                cfg.cokriging.kernel_low,
                cfg.cokriging.nugget_low,
                &gpr,
            )
        })
    }

    pub fn estimator(&self, data: &TrainingData, cfg: &MethodConfig) -> Result<Arc<EnetSet>> {
        cached(&self.estimator, || EnetSet::fit(&data.sim.features(), &data.sim.targets(), &cfg.enet, data.exec))
    }

    pub fn surrogate_report(&self) -> Option<SurrogateReport> {
        self.surrogate.lock().unwrap_or_else(|e| e.into_inner()).as_ref().map(|s| s.report.clone())
    }
}

/// Everything one training job needs.
pub struct TrainingData<'a> {
    /// Early-life experimental rows of the training cells.
    pub exp: &'a LabeledDataset,
    /// Full simulation grid.
    pub sim: &'a LabeledDataset,
    /// Top-degradation subset of the grid.
    pub sim_top: &'a LabeledDataset,
    pub pair: Arc<ElectrodePair>,
    pub shared: &'a SharedModels,
    pub exec: Execution,
}

fn concat(a: &LabeledDataset, b: &LabeledDataset) -> LabeledDataset {
    let mut out = a.clone();
    out.records.extend(b.records.iter().cloned());
    out
}

/// Trains `method`; `seed` drives network initialization and batching.
pub fn train_method(method: Method, data: &TrainingData, cfg: &MethodConfig, seed: u64) -> Result<Predictor> {
    if data.exp.is_empty() {
        return Err(invalid("no experimental training rows"));
    }
    let (x, y) = (data.exp.features(), data.exp.targets());
    let net = TrainControl { seed, ..cfg.net };
    Ok(match method {
        Method::Pinn => {
            let surrogate = data.shared.surrogate(data, cfg)?;
            let train = concat(data.exp, data.sim_top);
            let w = LossWeights::from_ratios(cfg.pinn_ratios)?;
            Predictor::Pinn(train_pinn(&train, data.pair.clone(), surrogate, w, &net)?)
        }
        Method::Cokriging => {
            let low = data.shared.low_fidelity(data, cfg)?;
            let ck = CoKrigingConfig { gpr: GprControl { execution: data.exec, ..cfg.gpr }, ..cfg.cokriging.clone() };
            Predictor::Cokriging(train_cokriging(&x, &y, low, &ck)?)
        }
        Method::DeltaEnet => {
            let est = data.shared.estimator(data, cfg)?;
            Predictor::DeltaEnet(delta::fit_corrector((*est).clone(), &x, &y, data.sim.len(), &cfg.enet, data.exec)?)
        }
        Method::Augmented => {
            let sim = if cfg.augment_full_grid { data.sim } else { data.sim_top };
            Predictor::Augmented(train_augmented(&x, &y, &sim.features(), &sim.targets(), &cfg.enet, data.exec)?)
        }
        Method::BaseNet => Predictor::BaseNet(train_base_net(&x, &y, &net)?),
        Method::BaseGpr => {
            let gpr = GprControl { execution: data.exec, ..cfg.gpr };
            Predictor::BaseGpr(train_base_gpr(&x, &y, &cfg.gpr_baseline, &gpr)?)
        }
        Method::BaseEnet => Predictor::BaseEnet(train_base_enet(&x, &y, &cfg.enet, data.exec)?),
    })
}

/// A trained model of any method: dQ/dV rows in, (q_cell, m_p, m_n, lii) out.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Predictor {
    Pinn(PinnModel),
    Cokriging(CoKrigingModel),
    DeltaEnet(DeltaEnetModel),
    Augmented(AugmentedEnet),
    BaseNet(BaselineNet),
    BaseGpr(BaselineGpr),
    BaseEnet(BaselineEnet),
}

pub const PREDICTOR_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct PredictorDocument {
    version: u32,
    model: Predictor,
}

impl Predictor {
    pub fn method(&self) -> Method {
        match self {
            Predictor::Pinn(_) => Method::Pinn,
            Predictor::Cokriging(_) => Method::Cokriging,
            Predictor::DeltaEnet(_) => Method::DeltaEnet,
            Predictor::Augmented(_) => Method::Augmented,
            Predictor::BaseNet(_) => Method::BaseNet,
            Predictor::BaseGpr(_) => Method::BaseGpr,
            Predictor::BaseEnet(_) => Method::BaseEnet,
        }
    }

    /// N × 4 health parameters.
    pub fn predict(&self, x: &Matrix) -> Matrix {
        match self {
            Predictor::Pinn(m) => m.predict(x).0,
            Predictor::Cokriging(m) => m.predict_mean(x),
            Predictor::DeltaEnet(m) => m.predict(x),
            Predictor::Augmented(m) => m.predict(x),
            Predictor::BaseNet(m) => m.predict(x),
            Predictor::BaseGpr(m) => m.predict(x),
            Predictor::BaseEnet(m) => m.predict(x),
        }
    }

    /// Posterior variance for the Gaussian-process methods.
    pub fn predict_variance(&self, x: &Matrix) -> Option<Result<Matrix>> {
        match self {
            Predictor::Cokriging(m) => Some(m.posterior_variance(x)),
            Predictor::BaseGpr(m) => Some(Ok(m.predict_variance(x))),
            _ => None,
        }
    }

    /// Training rows the model was exposed to.
    pub fn exposure(&self) -> usize {
        match self {
            Predictor::Pinn(m) => m.history.n_rows,
            Predictor::Cokriging(m) => m.exposure(),
            Predictor::DeltaEnet(m) => m.exposure(),
            Predictor::Augmented(m) => m.rows,
            Predictor::BaseNet(m) => m.history.n_rows,
            Predictor::BaseGpr(m) => m.models.first().map_or(0, |g| g.n_train()),
            Predictor::BaseEnet(m) => m.models.first().map_or(0, |e| e.n_rows),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&PredictorDocument { version: PREDICTOR_VERSION, model: self.clone() })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: PredictorDocument = serde_json::from_str(s)?;
        if doc.version != PREDICTOR_VERSION {
            return Err(invalid(format!("unsupported model version {}", doc.version)));
        }
        Ok(doc.model)
    }
}
