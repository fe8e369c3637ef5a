//! Minimal SVG charts: grouped bars, lines, heatmap.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
}

fn axes(out: &mut String, y_max: f64, y_label: &str) {
    let (x0, y0, y1) = (LEFT, H - BOTTOM, TOP);
    let _ = write!(out, r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#, W - RIGHT);
    let _ = write!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let y = y0 - (y0 - y1) * k as f64 / 4.0;
        let _ = write!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 6.0, y + 4.0, tick(v));
        let _ = write!(out, r##"<line x1="{x0}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/>"##, W - RIGHT);
    }
    let _ = write!(
        out,
        r#"<text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 0.01 && v.abs() < 1e4) {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn legend(out: &mut String, names: &[String]) {
    for (i, n) in names.iter().enumerate() {
        let y = TOP + 16.0 * i as f64;
        let x = W - RIGHT + 12.0;
        let _ = write!(out, r#"<rect x="{x}" y="{:.1}" width="10" height="10" fill="{}"/>"#, y, color(i));
        let _ = write!(out, r#"<text x="{}" y="{:.1}">{}</text>"#, x + 14.0, y + 9.0, escape(n));
    }
}

fn nice_max(v: f64) -> f64 {
    if !(v > 0.0) || !v.is_finite() {
        return 1.0;
    }
    let p = 10f64.powf(v.log10().floor());
    for m in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if m * p >= v {
            return m * p;
        }
    }
    10.0 * p
}

/// One group per category, one bar per series, with ±std whiskers.
pub fn grouped_bars(
    title: &str,
    y_label: &str,
    categories: &[&str],
    series: &[(String, Vec<f64>, Vec<f64>)],
) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let top = series
        .iter()
        .flat_map(|(_, m, s)| m.iter().zip(s).map(|(a, b)| a + b))
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let y_max = nice_max(top);
    axes(&mut out, y_max, y_label);
    let plot_w = W - LEFT - RIGHT;
    let group_w = plot_w / categories.len().max(1) as f64;
    let bar_w = 0.8 * group_w / series.len().max(1) as f64;
    let scale = (H - BOTTOM - TOP) / y_max;
    for (g, cat) in categories.iter().enumerate() {
        let gx = LEFT + group_w * g as f64;
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            gx + group_w / 2.0,
            H - BOTTOM + 18.0,
            escape(cat)
        );
        for (i, (_, mean, std)) in series.iter().enumerate() {
            let (m, s) = (mean[g], std[g]);
            if !m.is_finite() {
                continue;
            }
            let x = gx + 0.1 * group_w + bar_w * i as f64;
            let h = m * scale;
            let y = H - BOTTOM - h;
            let _ = write!(
                out,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{h:.1}" fill="{}"/>"#,
                bar_w * 0.9,
                color(i)
            );
            if s > 0.0 {
                let cx = x + bar_w * 0.45;
                let _ = write!(
                    out,
                    r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
                    H - BOTTOM - (m + s) * scale,
                    H - BOTTOM - (m - s).max(0.0) * scale
                );
            }
        }
    }
    legend(&mut out, &series.iter().map(|s| s.0.clone()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Polylines of (x, y) points.
pub fn lines(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let pts = series.iter().flat_map(|s| s.1.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut xmin, mut xmax, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for &(x, y) in pts {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymax = ymax.max(y);
    }
    if !xmin.is_finite() {
        (xmin, xmax) = (0.0, 1.0);
    }
    if xmax == xmin {
        xmax = xmin + 1.0;
    }
    let y_max = nice_max(ymax);
    axes(&mut out, y_max, y_label);
    let sx = |x: f64| LEFT + (x - xmin) / (xmax - xmin) * (W - LEFT - RIGHT);
    let sy = |y: f64| H - BOTTOM - y / y_max * (H - BOTTOM - TOP);
    for k in 0..=4 {
        let v = xmin + (xmax - xmin) * k as f64 / 4.0;
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(v),
            H - BOTTOM + 16.0,
            tick(v)
        );
    }
    let _ = write!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 18.0,
        escape(x_label)
    );
    for (i, (_, p)) in series.iter().enumerate() {
        let path: Vec<String> = p
            .iter()
            .filter(|q| q.0.is_finite() && q.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        let _ = write!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            path.join(" "),
            color(i)
        );
    }
    legend(&mut out, &series.iter().map(|s| s.0.clone()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Cell colour from white (low) to red (high); missing cells are grey.
pub fn heatmap(title: &str, rows: &[&str], cols: &[&str], values: &[Vec<Option<f64>>]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let finite: Vec<f64> = values.iter().flatten().flatten().copied().filter(|v| v.is_finite()).collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let left = 150.0;
    let cw = (W - left - 40.0) / cols.len().max(1) as f64;
    let ch = (H - TOP - 110.0) / rows.len().max(1) as f64;
    for (i, r) in rows.iter().enumerate() {
        let y = TOP + ch * i as f64;
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + ch / 2.0 + 4.0,
            escape(r)
        );
        for j in 0..cols.len() {
            let x = left + cw * j as f64;
            let v = values[i][j].filter(|v| v.is_finite());
            let fill = match v {
                Some(v) => {
                    let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
                    let g = (255.0 * (1.0 - t)).round() as u8;
                    format!("rgb(255,{g},{g})")
                }
                None => "#bbb".into(),
            };
            let _ = write!(
                out,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{cw:.1}" height="{ch:.1}" fill="{fill}" stroke="white"/>"#
            );
            if let Some(v) = v {
                let _ = write!(
                    out,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
                    x + cw / 2.0,
                    y + ch / 2.0 + 4.0,
                    tick(v)
                );
            }
        }
    }
    let base = TOP + ch * rows.len() as f64;
    for (j, c) in cols.iter().enumerate() {
        let x = left + cw * j as f64 + cw / 2.0;
        let _ = write!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" transform="rotate(-40 {x:.1} {:.1})" text-anchor="end">{}</text>"#,
            base + 14.0,
            base + 14.0,
            escape(c)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_formed_and_escaped() {
        let s = grouped_bars("a<b", "%", &["q", "m"], &[("x".into(), vec![1.0, f64::NAN], vec![0.1, 0.0])]);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n") && s.contains("a&lt;b"));
        let l = lines("t", "x", "y", &[("s".into(), vec![(0.0, 1.0), (1.0, 2.0)])]);
        assert!(l.contains("<polyline"));
        let h = heatmap("h", &["a", "b"], &["c"], &[vec![Some(1.0)], vec![None]]);
        assert_eq!(h.matches("<rect").count(), 3);
    }
}
