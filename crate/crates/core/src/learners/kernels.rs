//! The seven covariance functions used by the kriging models.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{dot, squared_distance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Rbf,
    Exponential,
    RationalQuadratic,
    Polynomial,
    Matern32,
    Matern52,
}

impl KernelKind {
    pub const ALL: [KernelKind; 7] = [
        KernelKind::Linear,
        KernelKind::Rbf,
        KernelKind::Exponential,
        KernelKind::RationalQuadratic,
        KernelKind::Polynomial,
        KernelKind::Matern32,
        KernelKind::Matern52,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Rbf => "rbf",
            KernelKind::Exponential => "exponential",
            KernelKind::RationalQuadratic => "rational_quadratic",
            KernelKind::Polynomial => "polynomial",
            KernelKind::Matern32 => "matern32",
            KernelKind::Matern52 => "matern52",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
            invalid(format!("unknown kernel `{s}` (expected one of {})", names.join(", ")))
        })
    }

    /// True when the kernel depends on the inputs only through their distance.
    pub fn is_stationary(self) -> bool {
        !matches!(self, KernelKind::Linear | KernelKind::Polynomial)
    }

    pub fn has_length_scale(self) -> bool {
        self.is_stationary()
    }

    pub fn has_variance(self) -> bool {
        matches!(self, KernelKind::Matern32 | KernelKind::Matern52)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// σ² prefactor, used by the Matern kernels only.
    pub variance: f64,
    pub length_scale: f64,
    /// Rational-quadratic shape parameter.
    pub alpha: f64,
    /// Polynomial degree.
    pub degree: u32,
    /// Polynomial offset `c`.
    pub offset: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind) -> Self {
        Self { kind, variance: 1.0, length_scale: 1.0, alpha: 1.0, degree: 2, offset: 1.0 }
    }

    pub fn matern32(variance: f64, length_scale: f64) -> Self {
        Self { variance, length_scale, ..Self::new(KernelKind::Matern32) }
    }

    pub fn matern52(variance: f64, length_scale: f64) -> Self {
        Self { variance, length_scale, ..Self::new(KernelKind::Matern52) }
    }

    pub fn rbf(length_scale: f64) -> Self {
        Self { length_scale, ..Self::new(KernelKind::Rbf) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0) || !self.length_scale.is_finite() {
            return Err(invalid(format!("length_scale must be positive, got {}", self.length_scale)));
        }
        if !(self.variance > 0.0) || !self.variance.is_finite() {
            return Err(invalid(format!("variance must be positive, got {}", self.variance)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.degree < 1 {
            return Err(invalid("polynomial degree must be at least 1"));
        }
        if !self.offset.is_finite() {
            return Err(invalid("polynomial offset must be finite"));
        }
        Ok(())
    }

    /// k(x, x′). Errors when the dimensions differ.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(invalid(format!("kernel inputs have dimensions {} and {}", x.len(), y.len())));
        }
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        if self.kind.is_stationary() {
            self.eval_parts(squared_distance(x, y), 0.0)
        } else {
            self.eval_parts(0.0, dot(x, y))
        }
    }

    /// Kernel value from the squared distance (stationary kinds) or the dot
    /// product (linear and polynomial).
    pub(crate) fn eval_parts(&self, r2: f64, xy: f64) -> f64 {
        let l = self.length_scale;
        match self.kind {
            KernelKind::Linear => xy,
            KernelKind::Polynomial => (xy + self.offset).powi(self.degree as i32),
            KernelKind::Rbf => (-r2 / (2.0 * l * l)).exp(),
            KernelKind::Exponential => (-r2.sqrt() / (2.0 * l)).exp(),
            KernelKind::RationalQuadratic => (1.0 + r2 / (2.0 * self.alpha * l * l)).powf(-self.alpha),
            KernelKind::Matern32 => {
                let a = 3f64.sqrt() * r2.sqrt() / l;
                self.variance * (1.0 + a) * (-a).exp()
            }
            KernelKind::Matern52 => {
                let r = r2.sqrt();
                let a = 5f64.sqrt() * r / l;
                self.variance * (1.0 + a + 5.0 * r2 / (3.0 * l * l)) * (-a).exp()
            }
        }
    }

    /// Log-scale hyperparameters tuned by likelihood search: the length
    /// scale for the stationary kinds and σ² for the Matern family.
    pub(crate) fn log_params(&self) -> Vec<f64> {
        let mut p = Vec::new();
        if self.kind.has_length_scale() {
            p.push(self.length_scale.ln());
        }
        if self.kind.has_variance() {
            p.push(self.variance.ln());
        }
        p
    }

    pub(crate) fn with_log_params(&self, p: &[f64]) -> Self {
        let mut s = *self;
        let mut it = p.iter();
        if self.kind.has_length_scale() {
            s.length_scale = it.next().expect("length scale").exp();
        }
        if self.kind.has_variance() {
            s.variance = it.next().expect("variance").exp();
        }
        s
    }
}
