//! Feed-forward network trained with minibatch Adam and early stopping.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::autodiff::{Tape, Var};
use super::Standardizer;
use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::sampling::{standard_normal, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainControl {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub minibatch: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    /// Per-epoch multiplicative learning-rate decay (1 = constant).
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for TrainControl {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            max_epochs: 1000,
            minibatch: 200,
            patience: 50,
            validation_fraction: 0.15,
            lr_decay: 1.0,
            seed: 0,
        }
    }
}

impl TrainControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.max_epochs == 0 || self.minibatch == 0 {
            return Err(invalid("learning_rate, max_epochs and minibatch must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return Err(invalid(format!("validation_fraction must lie in (0, 0.5), got {}", self.validation_fraction)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(invalid(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Epoch (1-based) whose weights were kept.
    pub best_epoch: usize,
    /// Rows passed to training, validation split included.
    #[serde(default)]
    pub n_rows: usize,
}

/// A training objective on the network's standardized output.
pub trait LossFn: Sync {
    /// `output` holds the batch predictions, `targets` the matching
    /// standardized target rows and `rows` their indices in the training set.
    fn loss(&self, tape: &mut Tape, output: Var, targets: &Matrix, rows: &[usize]) -> Var;
}

/// Mean squared error on standardized targets.
#[derive(Debug, Clone, Copy, Default)]
pub struct MseLoss;

impl LossFn for MseLoss {
    fn loss(&self, tape: &mut Tape, output: Var, targets: &Matrix, _rows: &[usize]) -> Var {
        tape.mse(output, targets)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub layers: Vec<usize>,
    pub activation: Activation,
    /// `layers[i] × layers[i+1]` weight matrices.
    pub weights: Vec<Matrix>,
    /// `1 × layers[i+1]` bias rows.
    pub biases: Vec<Matrix>,
    /// Optional linear input → output path added to the last layer.
    #[serde(default)]
    pub skip: Option<Matrix>,
    pub x_stats: Standardizer,
    pub y_stats: Standardizer,
}

impl DenseNet {
    /// He (ReLU) or Glorot-style (tanh) normal initialization, zero biases.
    pub fn new(layers: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if layers.len() < 2 || layers.contains(&0) {
            return Err(invalid(format!("invalid layer sizes {layers:?}")));
        }
        let mut rng = stream(seed, &[0x696e6974]);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layers.windows(2) {
            let gain = match activation {
                Activation::Relu => 2.0,
                Activation::Tanh => 1.0,
            };
            let sd = (gain / w[0] as f64).sqrt();
            weights.push(Matrix::from_vec(
                w[0],
                w[1],
                (0..w[0] * w[1]).map(|_| sd * standard_normal(&mut rng)).collect(),
            ));
            biases.push(Matrix::zeros(1, w[1]));
        }
        Ok(Self {
            layers: layers.to_vec(),
            activation,
            weights,
            biases,
            skip: None,
            x_stats: Standardizer::identity(layers[0]),
            y_stats: Standardizer::identity(*layers.last().unwrap()),
        })
    }

    /// Adds a zero-initialized linear input → output path.
    pub fn with_skip(mut self) -> Self {
        self.skip = Some(Matrix::zeros(self.input_dim(), self.output_dim()));
        self
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layers.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        let skip = self.skip.as_ref().map_or(0, |m| m.as_slice().len());
        self.layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>() + skip
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.weights.len() + 1 == self.layers.len()
            && self.biases.len() == self.weights.len()
            && self.layers.windows(2).zip(&self.weights).all(|(l, w)| w.rows() == l[0] && w.cols() == l[1])
            && self.layers.windows(2).zip(&self.biases).all(|(l, b)| b.rows() == 1 && b.cols() == l[1])
            && self.x_stats.dim() == self.input_dim()
            && self.y_stats.dim() == self.output_dim()
            && self.skip.as_ref().is_none_or(|s| s.rows() == self.input_dim() && s.cols() == self.output_dim());
        if !ok {
            return Err(Error::Validation("network layer shapes are inconsistent".into()));
        }
        if !self.weights.iter().chain(&self.biases).chain(&self.skip).all(Matrix::is_finite) {
            return Err(Error::Validation("network parameters must be finite".into()));
        }
        Ok(())
    }

    /// Standardized input → standardized output.
    pub fn forward_std(&self, xs: &Matrix) -> Matrix {
        let last = self.weights.len() - 1;
        let mut h = xs.clone();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.matmul(w);
            for r in 0..z.rows() {
                for (v, bj) in z.row_mut(r).iter_mut().zip(b.row(0)) {
                    *v += bj;
                }
            }
            if i < last {
                z = match self.activation {
                    Activation::Relu => z.map(|v| v.max(0.0)),
                    Activation::Tanh => z.map(f64::tanh),
                };
            }
            h = z;
        }
        if let Some(s) = &self.skip {
            let lin = xs.matmul(s);
            for (v, l) in h.as_mut_slice().iter_mut().zip(lin.as_slice()) {
                *v += l;
            }
        }
        h
    }

    /// Raw input → raw output.
    pub fn predict(&self, x: &Matrix) -> Matrix {
        self.y_stats.inverse(&self.forward_std(&self.x_stats.transform(x)))
    }

    /// Builds the forward pass on `tape`. Parameters are tape leaves with ids
    /// `2i` (weights), `2i+1` (biases) and `2L` (skip path) when `trainable`,
    /// constants otherwise.
    pub fn tape_forward(&self, tape: &mut Tape, x: Var, trainable: bool) -> Var {
        let leaf = |tape: &mut Tape, id: usize, m: &Matrix| {
            if trainable {
                tape.param(id, m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        let last = self.weights.len() - 1;
        let mut h = x;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let wv = leaf(tape, 2 * i, w);
            let bv = leaf(tape, 2 * i + 1, b);
            if i == last {
                if let Some(s) = &self.skip {
                    let sv = leaf(tape, 2 * self.weights.len(), s);
                    let zero = tape.constant(Matrix::zeros(1, s.cols()));
                    let lin = tape.linear(x, sv, zero);
                    let out = tape.linear(h, wv, bv);
                    return tape.add(out, lin);
                }
            }
            h = tape.linear(h, wv, bv);
            if i < last {
                h = match self.activation {
                    Activation::Relu => tape.relu(h),
                    Activation::Tanh => tape.tanh(h),
                };
            }
        }
        h
    }

    /// All weights and biases, layer by layer (weights row-major, then bias).
    pub fn params_flat(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            p.extend_from_slice(w.as_slice());
            p.extend_from_slice(b.as_slice());
        }
        if let Some(s) = &self.skip {
            p.extend_from_slice(s.as_slice());
        }
        p
    }

    pub fn set_params_flat(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params());
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for m in [w, b] {
                let n = m.as_slice().len();
                m.as_mut_slice().copy_from_slice(&p[k..k + n]);
                k += n;
            }
        }
        if let Some(s) = self.skip.as_mut() {
            s.as_mut_slice().copy_from_slice(&p[k..]);
        }
    }

    /// Loss and flat gradient on standardized rows `rows` of `xs`/`ys`.
    pub fn loss_and_grad(&self, xs: &Matrix, ys: &Matrix, rows: &[usize], loss: &dyn LossFn) -> (f64, Vec<f64>) {
        let mut tape = Tape::new();
        let x = tape.constant(xs.select_rows(rows));
        let out = self.tape_forward(&mut tape, x, true);
        let l = loss.loss(&mut tape, out, &ys.select_rows(rows), rows);
        let grads = tape.backward(l);
        let mut flat = Vec::with_capacity(self.n_params());
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            for (id, m) in [(2 * i, w), (2 * i + 1, b)] {
                match grads.get(id).and_then(Option::as_ref) {
                    Some(g) => flat.extend_from_slice(g.as_slice()),
                    None => flat.extend(std::iter::repeat_n(0.0, m.as_slice().len())),
                }
            }
        }
        if let Some(s) = &self.skip {
            match grads.get(2 * self.weights.len()).and_then(Option::as_ref) {
                Some(g) => flat.extend_from_slice(g.as_slice()),
                None => flat.extend(std::iter::repeat_n(0.0, s.as_slice().len())),
            }
        }
        (tape.scalar(l), flat)
    }

    /// Loss value only.
    pub fn loss_value(&self, xs: &Matrix, ys: &Matrix, rows: &[usize], loss: &dyn LossFn) -> f64 {
        let mut tape = Tape::new();
        let x = tape.constant(xs.select_rows(rows));
        let out = self.tape_forward(&mut tape, x, false);
        let l = loss.loss(&mut tape, out, &ys.select_rows(rows), rows);
        tape.scalar(l)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, p: &mut [f64], g: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..p.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g[i] * g[i];
            p[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Trains `net` on `(x, y)`. Standardization stats are fitted here; a
/// `validation_fraction` share of rows is held out for early stopping and
/// the best-validation weights are returned.
pub fn net_train(
    mut net: DenseNet,
    x: &Matrix,
    y: &Matrix,
    loss: &dyn LossFn,
    control: &TrainControl,
) -> Result<(DenseNet, TrainHistory)> {
    control.validate()?;
    let n = x.rows();
    if n == 0 || y.rows() != n {
        return Err(invalid(format!("training set has {n} inputs and {} targets", y.rows())));
    }
    if x.cols() != net.input_dim() || y.cols() != net.output_dim() {
        return Err(invalid(format!("data shapes {}→{} do not match network {:?}", x.cols(), y.cols(), net.layers)));
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(invalid("training data must be finite"));
    }
    net.x_stats = Standardizer::fit(x);
    net.y_stats = Standardizer::fit(y);
    let xs = net.x_stats.transform(x);
    let ys = net.y_stats.transform(y);

    let mut rng = stream(control.seed, &[0x6e6574]);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = if n >= 2 { ((control.validation_fraction * n as f64).round() as usize).clamp(1, n - 1) } else { 0 };
    let val: Vec<usize> = order[..n_val].to_vec();
    let mut train: Vec<usize> = order[n_val..].to_vec();

    let mut params = net.params_flat();
    let mut adam = Adam { m: vec![0.0; params.len()], v: vec![0.0; params.len()], t: 0 };
    let mut history = TrainHistory { n_rows: n, ..Default::default() };
    let mut best = (f64::INFINITY, params.clone());
    let mut since_best = 0;
    let mut lr = control.learning_rate;
    for epoch in 1..=control.max_epochs {
        train.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in train.chunks(control.minibatch) {
            let (l, g) = net.loss_and_grad(&xs, &ys, batch, loss);
            if !l.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainingDiverged { epoch });
            }
            total += l * batch.len() as f64;
            adam.step(&mut params, &g, lr);
            net.set_params_flat(&params);
        }
        let train_loss = total / train.len() as f64;
        let val_loss = if val.is_empty() { train_loss } else { net.loss_value(&xs, &ys, &val, loss) };
        if !val_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        if val_loss < best.0 {
            best = (val_loss, params.clone());
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= control.patience {
            break;
        }
        lr *= control.lr_decay;
    }
    net.set_params_flat(&best.1);
    Ok((net, history))
}
