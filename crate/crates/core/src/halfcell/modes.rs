//! Single degradation modes applied to a fresh cell.

use serde::{Deserialize, Serialize};

use super::{feature_curve, lithium_inventory, FeatureCurve, HalfCellParams, VoltageWindow};
use crate::electrode::ElectrodePair;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DegradationMode {
    #[serde(rename = "LAM_PE")]
    LamPe,
    #[serde(rename = "LAM_NE")]
    LamNe,
    #[serde(rename = "LLI")]
    Lli,
}

impl DegradationMode {
    pub const ALL: [DegradationMode; 3] = [DegradationMode::LamPe, DegradationMode::LamNe, DegradationMode::Lli];

    pub fn name(self) -> &'static str {
        match self {
            DegradationMode::LamPe => "LAM_PE",
            DegradationMode::LamNe => "LAM_NE",
            DegradationMode::Lli => "LLI",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown degradation mode `{s}` (expected LAM_PE, LAM_NE or LLI)")))
    }
}

/// Loss of active material scales a mass; loss of lithium moves the PE curve
/// by a share of the fresh lithium inventory while the NE stays put.
pub fn apply_mode(
    pair: &ElectrodePair,
    fresh: &HalfCellParams,
    mode: DegradationMode,
    fraction: f64,
) -> Result<HalfCellParams> {
    if !(0.0..=0.9).contains(&fraction) {
        return Err(invalid(format!("degradation fraction must lie in [0, 0.9], got {fraction}")));
    }
    let mut p = *fresh;
    match mode {
        DegradationMode::LamPe => p.m_p *= 1.0 - fraction,
        DegradationMode::LamNe => p.m_n *= 1.0 - fraction,
        DegradationMode::Lli => p.delta_p += fraction * lithium_inventory(pair, fresh),
    }
    p.validate()?;
    Ok(p)
}

pub fn single_mode_icq(
    pair: &ElectrodePair,
    fresh: &HalfCellParams,
    mode: DegradationMode,
    fraction: f64,
    window: VoltageWindow,
) -> Result<FeatureCurve> {
    let p = apply_mode(pair, fresh, mode, fraction)?;
    feature_curve(pair, &p, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::halfcell::{detect_peaks, health_params, PeakConfig};

    fn setup() -> (ElectrodePair, HalfCellParams, VoltageWindow) {
        (ElectrodePair::synthetic(), HalfCellParams::fresh(), VoltageWindow::default())
    }

    #[test]
    fn zero_fraction_is_identity() {
        let (pair, fresh, w) = setup();
        let base = feature_curve(&pair, &fresh, w).unwrap();
        for mode in DegradationMode::ALL {
            let f = single_mode_icq(&pair, &fresh, mode, 0.0, w).unwrap();
            for (a, b) in f.dqdv.iter().zip(&base.dqdv) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn lli_lowers_both_peaks() {
        let (pair, fresh, w) = setup();
        let cfg = PeakConfig::default();
        let f0 = detect_peaks(&feature_curve(&pair, &fresh, w).unwrap(), &cfg).unwrap().top_two().unwrap();
        let f1 = detect_peaks(&single_mode_icq(&pair, &fresh, DegradationMode::Lli, 0.2, w).unwrap(), &cfg)
            .unwrap()
            .top_two()
            .unwrap();
        assert!(f1[0].height < f0[0].height && f1[1].height < f0[1].height);
    }

    #[test]
    fn lam_pe_loses_capacity() {
        let (pair, fresh, w) = setup();
        let q0 = health_params(&pair, &fresh, w).unwrap().q_cell;
        let p = apply_mode(&pair, &fresh, DegradationMode::LamPe, 0.2).unwrap();
        assert!(health_params(&pair, &p, w).unwrap().q_cell < q0);
    }

    #[test]
    fn fraction_out_of_range() {
        let (pair, fresh, _) = setup();
        assert!(apply_mode(&pair, &fresh, DegradationMode::Lli, 0.95).is_err());
    }

    #[test]
    fn mode_names_parse() {
        for m in DegradationMode::ALL {
            assert_eq!(DegradationMode::parse(m.name()).unwrap(), m);
        }
    }
}
