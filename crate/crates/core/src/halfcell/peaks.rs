//! Peak picking on dQ/dV feature curves: local maxima filtered by height,
//! spacing, and topographic prominence.

use serde::{Deserialize, Serialize};

use super::FeatureCurve;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeakConfig {
    /// Minimum prominence as a fraction of the curve maximum.
    pub min_prominence: f64,
    /// Minimum height as a fraction of the curve maximum.
    pub min_height: f64,
    /// Minimum spacing between peaks in grid points.
    pub min_distance: usize,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self { min_prominence: 0.05, min_height: 0.10, min_distance: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Sub-grid position from a parabola through the three samples around the
    /// maximum (V).
    pub v_position: f64,
    /// mAh/V
    pub height: f64,
    /// mAh/V
    pub prominence: f64,
    /// Full width at half prominence (V).
    pub width: f64,
    /// Grid index of the sampled maximum.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    /// Sorted by descending height; equal heights keep the lower voltage first.
    pub peaks: Vec<Peak>,
}

impl PeakSet {
    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    /// The two tallest peaks ordered by ascending voltage.
    pub fn top_two(&self) -> Result<[Peak; 2]> {
        if self.peaks.len() < 2 {
            return Err(Error::PeakDeficit { found: self.peaks.len(), needed: 2 });
        }
        let (a, b) = (self.peaks[0], self.peaks[1]);
        Ok(if a.v_position <= b.v_position { [a, b] } else { [b, a] })
    }
}

/// Peaks that pass all filters; errors when fewer than two survive.
pub fn detect_peaks(feature: &FeatureCurve, config: &PeakConfig) -> Result<PeakSet> {
    let set = find_peaks(feature, config);
    if set.len() < 2 {
        return Err(Error::PeakDeficit { found: set.len(), needed: 2 });
    }
    Ok(set)
}

/// Same filters as [`detect_peaks`] without the two-peak requirement.
pub fn find_peaks(feature: &FeatureCurve, config: &PeakConfig) -> PeakSet {
    let y = &feature.dqdv;
    let v = &feature.v_grid;
    let top = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) {
        return PeakSet { peaks: Vec::new() };
    }

    let mut idx: Vec<usize> = local_maxima(y).into_iter().filter(|&i| y[i] >= config.min_height * top).collect();
    idx = enforce_distance(y, &idx, config.min_distance);

    let mut peaks: Vec<Peak> = idx
        .into_iter()
        .filter_map(|i| {
            let (prom, left_base, right_base) = prominence(y, i);
            if prom < config.min_prominence * top {
                return None;
            }
            let step = if v.len() > 1 { v[1] - v[0] } else { 0.0 };
            Some(Peak {
                v_position: v[i] + refine(y, i) * step,
                height: y[i],
                prominence: prom,
                width: half_prominence_width(y, i, prom, left_base, right_base) * step,
                index: i,
            })
        })
        .collect();
    peaks.sort_by(|a, b| b.height.total_cmp(&a.height).then(a.v_position.total_cmp(&b.v_position)));
    PeakSet { peaks }
}

/// Strict local maxima; a flat top counts once, at its middle sample.
fn local_maxima(y: &[f64]) -> Vec<usize> {
    let n = y.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i - 1] < y[i] {
            let mut ahead = i + 1;
            while ahead + 1 < n && y[ahead] == y[i] {
                ahead += 1;
            }
            if y[ahead] < y[i] {
                out.push((i + ahead - 1) / 2);
                i = ahead;
            }
        }
        i += 1;
    }
    out
}

/// Drops lower peaks that sit closer than `distance` samples to a higher one.
fn enforce_distance(y: &[f64], idx: &[usize], distance: usize) -> Vec<usize> {
    if distance <= 1 || idx.len() < 2 {
        return idx.to_vec();
    }
    let mut order: Vec<usize> = (0..idx.len()).collect();
    order.sort_by(|&a, &b| y[idx[b]].total_cmp(&y[idx[a]]).then(idx[a].cmp(&idx[b])));
    let mut keep = vec![true; idx.len()];
    for &k in &order {
        if !keep[k] {
            continue;
        }
        for j in 0..idx.len() {
            if j != k && keep[j] && idx[j].abs_diff(idx[k]) < distance {
                keep[j] = false;
            }
        }
    }
    idx.iter().zip(keep).filter_map(|(&i, k)| k.then_some(i)).collect()
}

/// Height above the higher of the two lowest points reached before climbing
/// onto taller terrain on either side. Returns (prominence, left base, right base).
fn prominence(y: &[f64], i: usize) -> (f64, usize, usize) {
    let mut left_min = y[i];
    let mut left_base = i;
    for j in (0..i).rev() {
        if y[j] > y[i] {
            break;
        }
        if y[j] < left_min {
            left_min = y[j];
            left_base = j;
        }
    }
    let mut right_min = y[i];
    let mut right_base = i;
    for (j, &yj) in y.iter().enumerate().skip(i + 1) {
        if yj > y[i] {
            break;
        }
        if yj < right_min {
            right_min = yj;
            right_base = j;
        }
    }
    (y[i] - left_min.max(right_min), left_base, right_base)
}

/// Width (in samples) where the peak crosses half its prominence, with linear
/// interpolation between samples.
fn half_prominence_width(y: &[f64], i: usize, prom: f64, left_base: usize, right_base: usize) -> f64 {
    let h = y[i] - 0.5 * prom;
    let mut j = i;
    while j > left_base && y[j] > h {
        j -= 1;
    }
    let mut left = j as f64;
    if y[j] < h {
        left += (h - y[j]) / (y[j + 1] - y[j]);
    }
    let mut k = i;
    while k < right_base && y[k] > h {
        k += 1;
    }
    let mut right = k as f64;
    if y[k] < h {
        right -= (h - y[k]) / (y[k - 1] - y[k]);
    }
    right - left
}

/// Vertex offset (in samples, within ±0.5) of the parabola through
/// `y[i-1], y[i], y[i+1]`.
fn refine(y: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= y.len() {
        return 0.0;
    }
    let (a, b, c) = (y[i - 1], y[i], y[i + 1]);
    let curv = a - 2.0 * b + c;
    if !(curv < 0.0) {
        return 0.0;
    }
    (0.5 * (a - c) / curv).clamp(-0.5, 0.5)
}
