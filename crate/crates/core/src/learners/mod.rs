//! Learning primitives built from scratch: kernels and Gaussian-process
//! regression, elastic net, and a small feed-forward network with a
//! reverse-mode tape, Adam and early stopping.

pub mod autodiff;
mod enet;
mod gpr;
mod gradcheck;
mod kernels;
mod net;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

pub use enet::{enet_fit, ElasticNetModel, EnetControl};
pub use gpr::{gpr_fit, GprControl, GprModel};
pub use gradcheck::{grad_check, GradCheckReport};
pub use kernels::{KernelKind, KernelSpec};
pub use net::{net_train, Activation, DenseNet, LossFn, MseLoss, TrainControl, TrainHistory};

/// Columns whose spread is below this (relative to their magnitude) are
/// treated as constant.
const CONSTANT_TOL: f64 = 1e-12;

/// Per-column affine standardization. Constant columns keep scale 1 for the
/// forward map and are flagged so the inverse map returns the mean exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(m: &Matrix) -> Self {
        let (n, d) = (m.rows(), m.cols());
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (acc, x) in mean.iter_mut().zip(m.row(i)) {
                *acc += x;
            }
        }
        mean.iter_mut().for_each(|x| *x /= n.max(1) as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                var[j] += (m[(i, j)] - mean[j]).powi(2);
            }
        }
        let mut scale = vec![1.0; d];
        let mut constant = vec![false; d];
        for j in 0..d {
            let s = (var[j] / n.max(1) as f64).sqrt();
            if s > CONSTANT_TOL * mean[j].abs().max(1.0) {
                scale[j] = s;
            } else {
                constant[j] = true;
            }
        }
        Self { mean, scale, constant }
    }

    pub fn fit_vec(y: &[f64]) -> Self {
        Self::fit(&Matrix::from_vec(y.len(), 1, y.to_vec()))
    }

    pub fn identity(d: usize) -> Self {
        Self { mean: vec![0.0; d], scale: vec![1.0; d], constant: vec![false; d] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect()
    }

    pub fn transform(&self, m: &Matrix) -> Matrix {
        let mut out = m.clone();
        for i in 0..out.rows() {
            for (j, x) in out.row_mut(i).iter_mut().enumerate() {
                *x = (*x - self.mean[j]) / self.scale[j];
            }
        }
        out
    }

    pub fn inverse(&self, m: &Matrix) -> Matrix {
        let mut out = m.clone();
        for i in 0..out.rows() {
            for (j, x) in out.row_mut(i).iter_mut().enumerate() {
                *x = if self.constant[j] { self.mean[j] } else { *x * self.scale[j] + self.mean[j] };
            }
        }
        out
    }
}
