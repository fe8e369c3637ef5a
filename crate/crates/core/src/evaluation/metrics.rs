//! Error metrics.

use crate::error::{invalid, Result};
use crate::linalg::Matrix;

/// Root mean squared percentage error per column, pooled over all rows:
/// `100·sqrt(Σ((ŷ−y)/y)² / N)`.
pub fn rmspe(pred: &Matrix, truth: &Matrix) -> Result<Vec<f64>> {
    if pred.rows() != truth.rows() || pred.cols() != truth.cols() {
        return Err(invalid(format!(
            "prediction is {}×{} but truth is {}×{}",
            pred.rows(),
            pred.cols(),
            truth.rows(),
            truth.cols()
        )));
    }
    if truth.rows() == 0 {
        return Err(invalid("RMSPE of an empty set"));
    }
    let mut sums = vec![0.0; truth.cols()];
    for i in 0..truth.rows() {
        for (j, s) in sums.iter_mut().enumerate() {
            let y = truth[(i, j)];
            if y == 0.0 {
                return Err(invalid(format!("truth row {i} column {j} is zero; relative error undefined")));
            }
            *s += ((pred[(i, j)] - y) / y).powi(2);
        }
    }
    Ok(sums.into_iter().map(|s| 100.0 * (s / truth.rows() as f64).sqrt()).collect())
}

/// Pooled RMSPE over folds, each given as (prediction, truth): one square
/// root over all folds' squared relative errors.
pub fn pooled_rmspe(folds: &[(Matrix, Matrix)]) -> Result<Vec<f64>> {
    let cols = folds.first().map_or(0, |f| f.1.cols());
    let mut sums = vec![0.0; cols];
    let mut n = 0usize;
    for (pred, truth) in folds {
        let r = rmspe(pred, truth)?;
        if r.len() != cols {
            return Err(invalid("folds have different widths"));
        }
        for (s, v) in sums.iter_mut().zip(r) {
            *s += (v / 100.0).powi(2) * truth.rows() as f64;
        }
        n += truth.rows();
    }
    if n == 0 {
        return Err(invalid("RMSPE of an empty set"));
    }
    Ok(sums.into_iter().map(|s| 100.0 * (s / n as f64).sqrt()).collect())
}

/// Rows whose truth has a component below `1e-6` of the reference value in
/// magnitude; these are left out of RMSPE.
pub fn near_zero_rows(truth: &Matrix, reference: &[f64]) -> Vec<usize> {
    (0..truth.rows()).filter(|&i| (0..truth.cols()).any(|j| truth[(i, j)].abs() < 1e-6 * reference[j].abs())).collect()
}

/// Extrapolation error of one test point: `C1 + C2·RMSE` over
/// (m_p, m_n, lii), i.e. columns 1..4 of a health row.
pub fn bubble_score(pred: &[f64], truth: &[f64], c1: f64, c2: f64) -> f64 {
    let mse = (1..4).map(|k| (pred[k] - truth[k]).powi(2)).sum::<f64>() / 3.0;
    c1 + c2 * mse.sqrt()
}

/// Sample mean and standard deviation (n − 1; 0 for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}
