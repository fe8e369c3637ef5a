//! Neural stand-in for the half-cell forward map used inside the PINN loss.

use serde::{Deserialize, Serialize};

use crate::datagen::{perturb_for_surrogate, SurrogateSample};
use crate::electrode::ElectrodePair;
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::halfcell::{HalfCellParams, VoltageWindow};
use crate::learners::{net_train, Activation, DenseNet, MseLoss, TrainControl};
use crate::linalg::Matrix;
use crate::sampling::stream;

/// Output columns: capacity, lithium inventory, lower and upper peak voltage.
pub const SURROGATE_OUTPUTS: [&str; 4] = ["q_cell", "lii", "v_peak1", "v_peak2"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateControl {
    pub per_center: usize,
    /// Perturbation range (fraction of each parameter).
    pub range_frac: f64,
    /// Centers are thinned to at most this many by even striding.
    pub max_centers: usize,
    pub holdout_fraction: f64,
    /// Max relative residual allowed on the held-out samples.
    pub tolerance: f64,
    /// Extra attempts, each with twice the samples per center.
    pub retries: usize,
    pub hidden: [usize; 2],
    pub train: TrainControl,
    pub seed: u64,
}

impl Default for SurrogateControl {
    fn default() -> Self {
        Self {
            per_center: 64,
            range_frac: 0.15,
            max_centers: 96,
            holdout_fraction: 0.2,
            tolerance: 0.005,
            retries: 1,
            hidden: [32, 32],
            train: TrainControl {
                learning_rate: 0.005,
                max_epochs: 3000,
                minibatch: 200,
                patience: 200,
                validation_fraction: 0.15,
                lr_decay: 0.998,
                seed: 0,
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    /// Max relative residual per output on the held-out samples.
    pub holdout_residual: [f64; 4],
    pub n_train: usize,
    pub n_holdout: usize,
    pub epochs: usize,
    pub attempts: usize,
}

impl SurrogateReport {
    pub fn max_residual(&self) -> f64 {
        self.holdout_residual.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateHc {
    pub net: DenseNet,
    /// Per-parameter [min, max] of the training inputs.
    pub envelope: [[f64; 2]; 4],
    /// Perturbation centers actually used.
    pub centers: Vec<HalfCellParams>,
    pub report: SurrogateReport,
}

impl SurrogateHc {
    /// (q_cell, lii, v_peak1, v_peak2) for each parameter set.
    pub fn predict(&self, params: &[HalfCellParams]) -> Matrix {
        let x = Matrix::from_rows(&params.iter().map(|p| p.to_array()).collect::<Vec<_>>());
        self.net.predict(&x)
    }

    /// False when any parameter lies outside the training envelope; the
    /// accuracy contract does not hold there.
    pub fn in_envelope(&self, p: &HalfCellParams) -> bool {
        p.to_array().iter().zip(&self.envelope).all(|(v, [lo, hi])| v >= lo && v <= hi)
    }
}

fn sample_targets(s: &SurrogateSample) -> [f64; 4] {
    [s.health.q_cell, s.health.lii, s.peaks[0], s.peaks[1]]
}

fn max_relative_residual(net: &DenseNet, samples: &[SurrogateSample]) -> [f64; 4] {
    let x = Matrix::from_rows(&samples.iter().map(|s| s.params.to_array()).collect::<Vec<_>>());
    let pred = net.predict(&x);
    let mut worst = [0.0f64; 4];
    for (i, s) in samples.iter().enumerate() {
        for (k, t) in sample_targets(s).iter().enumerate() {
            worst[k] = worst[k].max(((pred[(i, k)] - t) / t).abs());
        }
    }
    worst
}

/// Trains the surrogate on perturbations of `centers`. Every center's
/// samples go either to training or to the held-out check, so the check
/// measures generalization to unseen neighbourhoods as well as unseen draws.
pub fn train_surrogate(
    pair: &ElectrodePair,
    centers: &[HalfCellParams],
    window: VoltageWindow,
    control: &SurrogateControl,
    exec: Execution,
) -> Result<SurrogateHc> {
    if centers.is_empty() {
        return Err(invalid("surrogate needs at least one center"));
    }
    if !(control.holdout_fraction > 0.0 && control.holdout_fraction < 1.0) {
        return Err(invalid("holdout_fraction must lie in (0, 1)"));
    }
    let stride = centers.len().div_ceil(control.max_centers.max(1));
    let thinned: Vec<HalfCellParams> = centers.iter().step_by(stride).copied().collect();
    let mut last = None;
    for attempt in 0..=control.retries {
        let per_center = control.per_center << attempt;
        let samples = perturb_for_surrogate(
            pair,
            &thinned,
            control.range_frac,
            per_center,
            control.seed + attempt as u64,
            window,
            exec,
        )?;
        let mut holdout = Vec::new();
        let mut train = Vec::new();
        let mut rng = stream(control.seed, &[5, attempt as u64]);
        for (i, s) in samples.into_iter().enumerate() {
            if rand::Rng::random::<f64>(&mut rng) < control.holdout_fraction || i == 0 {
                holdout.push(s);
            } else {
                train.push(s);
            }
        }
        if train.len() < 8 {
            return Err(Error::Generation("too few feasible surrogate samples".into()));
        }
        let x = Matrix::from_rows(&train.iter().map(|s| s.params.to_array()).collect::<Vec<_>>());
        let y = Matrix::from_rows(&train.iter().map(sample_targets).collect::<Vec<_>>());
        let layers = [4, control.hidden[0], control.hidden[1], 4];
        let net = DenseNet::new(&layers, Activation::Tanh, control.seed)?.with_skip();
        let (net, hist) = net_train(net, &x, &y, &MseLoss, &control.train)?;
        let residual = max_relative_residual(&net, &holdout);
        let mut envelope = [[f64::INFINITY, f64::NEG_INFINITY]; 4];
        for s in &train {
            for (e, v) in envelope.iter_mut().zip(s.params.to_array()) {
                e[0] = e[0].min(v);
                e[1] = e[1].max(v);
            }
        }
        let report = SurrogateReport {
            holdout_residual: residual,
            n_train: train.len(),
            n_holdout: holdout.len(),
            epochs: hist.train_loss.len(),
            attempts: attempt + 1,
        };
        let s = SurrogateHc { net, envelope, centers: thinned.clone(), report };
        if s.report.max_residual() < control.tolerance {
            return Ok(s);
        }
        last = Some(s);
    }
    let s = last.expect("at least one attempt");
    Err(Error::SurrogateAccuracy { residual: s.report.max_residual(), limit: control.tolerance })
}
