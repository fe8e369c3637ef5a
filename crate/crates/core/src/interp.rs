//! Shape-preserving piecewise-cubic Hermite interpolation (Fritsch–Carlson
//! slopes) with linear extrapolation along the boundary secants.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    /// `x` must be strictly increasing with at least two knots.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(invalid("knot arrays differ in length"));
        }
        if x.len() < 2 {
            return Err(invalid("need at least two knots"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("knots must be strictly increasing"));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(invalid("knots must be finite"));
        }
        let d = slopes(&x, &y);
        Ok(Self { x, y, d })
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.partition_point(|&xi| xi <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    fn secant(&self, k: usize) -> f64 {
        (self.y[k + 1] - self.y[k]) / (self.x[k + 1] - self.x[k])
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0] + self.secant(0) * (t - self.x[0]);
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1] + self.secant(n - 2) * (t - self.x[n - 1]);
        }
        let k = self.segment(t);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }

    /// First derivative of the interpolant.
    pub fn derivative(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t < self.x[0] {
            return self.secant(0);
        }
        if t > self.x[n - 1] {
            return self.secant(n - 2);
        }
        let k = self.segment(t);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let dh00 = 6.0 * s2 - 6.0 * s;
        let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
        let dh01 = -6.0 * s2 + 6.0 * s;
        let dh11 = 3.0 * s2 - 2.0 * s;
        (dh00 * self.y[k] + dh01 * self.y[k + 1]) / h + dh10 * self.d[k] + dh11 * self.d[k + 1]
    }
}

fn slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let del: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![del[0], del[0]];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if del[k - 1] * del[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
        }
    }
    d[0] = end_slope(h[0], h[1], del[0], del[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    d
}

fn end_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_two_point_curve() {
        let c = MonotoneCubic::new(vec![0.0, 100.0], vec![4.0, 3.0]).unwrap();
        assert!((c.eval(50.0) - 3.5).abs() < 1e-15);
        assert!((c.eval(-10.0) - 4.1).abs() < 1e-12);
        assert!((c.eval(110.0) - 2.9).abs() < 1e-12);
    }

    #[test]
    fn passes_through_knots() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 1.5).collect();
        let y: Vec<f64> = x.iter().map(|t| (t * 0.3).sin()).collect();
        let c = MonotoneCubic::new(x.clone(), y.clone()).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert_eq!(c.eval(*a), *b);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.2).collect();
        let y: Vec<f64> = x.iter().map(|t| -t.powi(3) / 30.0 - t).collect();
        let c = MonotoneCubic::new(x, y).unwrap();
        for t in [0.33, 2.71, 7.77] {
            let fd = (c.eval(t + 1e-6) - c.eval(t - 1e-6)) / 2e-6;
            assert!((fd - c.derivative(t)).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn preserves_monotonicity(steps in proptest::collection::vec(0.0f64..1.0, 3..30),
                                  gaps in proptest::collection::vec(0.01f64..2.0, 30),
                                  probes in proptest::collection::vec(-5.0f64..70.0, 40)) {
            let n = steps.len();
            let mut x = vec![0.0];
            let mut y = vec![5.0];
            for k in 1..n {
                x.push(x[k - 1] + gaps[k]);
                y.push(y[k - 1] - steps[k]);
            }
            let c = MonotoneCubic::new(x, y).unwrap();
            let mut p = probes.clone();
            p.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in p.windows(2) {
                prop_assert!(c.eval(w[0]) >= c.eval(w[1]) - 1e-12);
            }
        }
    }
}
