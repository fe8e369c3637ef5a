//! Derivative-free minimizers: box-constrained Nelder–Mead and golden-section
//! line search.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the simplex spread in `f` falls below this.
    pub f_tol: f64,
    /// ... and every vertex lies within this distance (per coordinate) of the best.
    pub x_tol: f64,
    /// Initial simplex edge, per coordinate.
    pub step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evals: 4000, f_tol: 1e-16, x_tol: 1e-10, step: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub iterations: usize,
}

/// Minimizes `f` over the box `[lo, hi]`. Trial points are projected onto the
/// box, so `f` is only ever called inside it.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], lo: &[f64], hi: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let n = x0.len();
    let clamp = |x: &mut Vec<f64>| {
        for ((xi, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
            *xi = xi.clamp(l, h);
        }
    };
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut start = x0.to_vec();
    clamp(&mut start);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(&start);
    simplex.push((start.clone(), f0));
    for i in 0..n {
        let mut x = start.clone();
        let span = hi[i] - lo[i];
        let step = opts.step * if span.is_finite() && span > 0.0 { span } else { 1.0 };
        x[i] += step;
        if x[i] > hi[i] {
            x[i] = start[i] - step;
        }
        clamp(&mut x);
        let fx = eval(&x);
        simplex.push((x, fx));
    }

    let mut iterations = 0;
    while evals.get() < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        let spread_x = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if (worst - best).abs() <= opts.f_tol && spread_x <= opts.x_tol {
            break;
        }
        if spread_x <= opts.x_tol * 1e-3 {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect();
            clamp(&mut p);
            p
        };

        let xr = along(1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let x = along(0.5);
            let v = eval(&x);
            (x, v)
        } else {
            let x = along(-0.5);
            let v = eval(&x);
            (x, v)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let mut x: Vec<f64> = x_best.iter().zip(&v.0).map(|(b, xi)| b + 0.5 * (xi - b)).collect();
            clamp(&mut x);
            let fx = eval(&x);
            *v = (x, fx);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    Minimum { x, f, evals: evals.get(), iterations }
}

/// Golden-section search for the minimum of a unimodal `f` on `[a, b]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_minimum() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(
            rosen,
            &[-1.2, 1.0],
            &[-5.0, -5.0],
            &[5.0, 5.0],
            &NelderMeadOptions { step: 0.02, ..Default::default() },
        );
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{m:?}");
    }

    #[test]
    fn respects_box() {
        let m = nelder_mead(|x: &[f64]| (x[0] - 3.0).powi(2), &[0.0], &[-1.0], &[1.0], &NelderMeadOptions::default());
        assert!((m.x[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn golden_finds_parabola_vertex() {
        let (x, _) = golden_section(|x| (x - 0.3).powi(2), -2.0, 2.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
    }
}
