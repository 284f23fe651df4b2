//! Static SVG line plots of aggregated metrics against SNR.

use std::fmt::Write;

use crate::sweep::AggregateRow;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD_L: f64 = 70.0;
const PAD_R: f64 = 150.0;
const PAD_T: f64 = 40.0;
const PAD_B: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One curve per method; `log_y` plots log10 of the mean. Returns `None` if
/// the metric has no finite values.
pub fn metric_svg(rows: &[AggregateRow], metric: &str, log_y: bool) -> Option<String> {
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let curves: Vec<(&str, Vec<(f64, f64)>)> = methods
        .iter()
        .map(|m| {
            let pts = rows
                .iter()
                .filter(|r| r.method == *m)
                .filter_map(|r| r.stat(metric).map(|s| (r.snr_db, s.mean)))
                .filter(|(_, v)| v.is_finite() && (!log_y || *v > 0.0))
                .map(|(x, v)| (x, if log_y { v.log10() } else { v }))
                .collect();
            (*m, pts)
        })
        .collect();
    let all: Vec<(f64, f64)> = curves.iter().flat_map(|c| c.1.iter().copied()).collect();
    if all.is_empty() {
        return None;
    }
    let (mut x0, mut x1, mut y0, mut y1) = all.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |a, p| (a.0.min(p.0), a.1.max(p.0), a.2.min(p.1), a.3.max(p.1)),
    );
    if x1 - x0 < 1e-12 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| PAD_L + (x - x0) / (x1 - x0) * (W - PAD_L - PAD_R);
    let sy = |y: f64| H - PAD_B - (y - y0) / (y1 - y0) * (H - PAD_T - PAD_B);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let ylabel = if log_y { format!("log10 {metric}") } else { metric.to_string() };
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle">{ylabel} vs SNR</text>"#, W / 2.0);
    let _ = writeln!(
        s,
        r#"<line x1="{PAD_L}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{PAD_L}" y1="{PAD_T}" x2="{PAD_L}" y2="{0}" stroke="black"/>"#,
        H - PAD_B,
        W - PAD_R
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.1}</text><text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#,
            sx(xv),
            H - PAD_B + 18.0,
            PAD_L - 6.0,
            sy(yv) + 4.0
        );
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">SNR (dB)</text>"#, (PAD_L + W - PAD_R) / 2.0, H - 12.0);
    for (k, (name, pts)) in curves.iter().enumerate() {
        let c = COLORS[k % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#, path.join(" "));
        for (x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, sx(*x), sy(*y));
        }
        let ly = PAD_T + 10.0 + 18.0 * k as f64;
        let lx = W - PAD_R + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="2"/><text x="{}" y="{}">{name}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    Some(s)
}

/// RMSE on a linear axis and NMSE on a log axis.
pub fn standard_plots(rows: &[AggregateRow]) -> Vec<(String, String)> {
    [
        ("rmse_target", false),
        ("rmse_scatterer", false),
        ("nmse_radar", true),
        ("nmse_comm", true),
    ]
    .into_iter()
    .filter_map(|(m, log)| metric_svg(rows, m, log).map(|svg| (format!("{m}.svg"), svg)))
    .collect()
}
