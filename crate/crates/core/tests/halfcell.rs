use battdiag::electrode::ElectrodePair;
use battdiag::halfcell::{
    apply_mode, canonicalize, feature_curve, health_params, reconstruct_ocv, DegradationMode, HalfCellParams,
    VoltageWindow,
};
use battdiag::interp::MonotoneCubic;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = HalfCellParams> {
    (1.4..2.05f64, 0.7..1.03f64, 0.0..60.0f64, -30.0..0.0f64).prop_map(|(m_p, m_n, delta_p, delta_n)| HalfCellParams {
        m_p,
        m_n,
        delta_p,
        delta_n,
    })
}

fn w() -> VoltageWindow {
    VoltageWindow::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dqdv_integrates_to_usable_capacity(p in params()) {
        let pair = ElectrodePair::synthetic();
        let Ok(h) = health_params(&pair, &p, w()) else { return Ok(()) };
        let area = feature_curve(&pair, &p, w()).unwrap().integral();
        prop_assert!(((area - h.q_cell) / h.q_cell).abs() < 0.01, "{area} vs {}", h.q_cell);
    }

    #[test]
    fn canonical_gauge_is_unobservable(p in params()) {
        let pair = ElectrodePair::synthetic();
        let Ok(c) = canonicalize(&pair, &p, w()) else { return Ok(()) };
        prop_assert!(((c.delta_p - c.delta_n) - (p.delta_p - p.delta_n)).abs() < 1e-9);
        let again = canonicalize(&pair, &c, w()).unwrap();
        prop_assert!((again.delta_p - c.delta_p).abs() < 1e-9);
        let (a, b) = (reconstruct_ocv(&pair, &p, w(), 100).unwrap(), reconstruct_ocv(&pair, &c, w(), 100).unwrap());
        for (x, y) in a.v().iter().zip(b.v()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let (hp, hc) = (health_params(&pair, &p, w()).unwrap(), health_params(&pair, &c, w()).unwrap());
        prop_assert!((hp.q_cell - hc.q_cell).abs() < 1e-9 * hp.q_cell);
    }

    #[test]
    fn capacity_falls_as_active_material_is_lost(a in 0.0..0.3f64, b in 0.0..0.3f64) {
        let pair = ElectrodePair::synthetic();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-3);
        let fresh = canonicalize(&pair, &HalfCellParams::fresh(), w()).unwrap();
        for mode in [DegradationMode::LamPe, DegradationMode::LamNe] {
            let q = |f: f64| health_params(&pair, &apply_mode(&pair, &fresh, mode, f).unwrap(), w()).unwrap().q_cell;
            prop_assert!(q(hi) < q(lo), "{mode:?}: {} !< {}", q(hi), q(lo));
        }
    }

    #[test]
    fn monotone_interpolant_stays_monotone(steps in prop::collection::vec(0.0..1.0f64, 3..12), t in 0.0..1.0f64) {
        let x: Vec<f64> = (0..steps.len()).map(|i| i as f64).collect();
        let y: Vec<f64> = steps.iter().scan(0.0, |s, d| { *s += d; Some(*s) }).collect();
        let f = MonotoneCubic::new(x.clone(), y.clone()).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            prop_assert!((f.eval(*xi) - yi).abs() < 1e-12);
        }
        let span = x[x.len() - 1];
        let (u, v) = (t * span, (t * span + 0.01).min(span));
        prop_assert!(f.eval(v) >= f.eval(u) - 1e-12);
        prop_assert!(f.derivative(t * span) >= -1e-12);
    }
}

#[test]
fn lithium_loss_leaves_masses_alone() {
    let pair = ElectrodePair::synthetic();
    let fresh = canonicalize(&pair, &HalfCellParams::fresh(), w()).unwrap();
    let p = apply_mode(&pair, &fresh, DegradationMode::Lli, 0.1).unwrap();
    let (h0, h1) = (health_params(&pair, &fresh, w()).unwrap(), health_params(&pair, &p, w()).unwrap());
    assert_eq!((h1.m_p, h1.m_n), (h0.m_p, h0.m_n));
    assert!(h1.lii < h0.lii && h1.q_cell < h0.q_cell);
}
