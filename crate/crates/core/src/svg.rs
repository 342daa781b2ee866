//! Minimal static line charts of sweep summaries: one mean polyline and
//! one shaded band polygon per method, on a fixed 800x500 canvas.

use std::fmt::Write;

use crate::simlab::{Method, SummaryRow};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 140.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

/// The four charted metrics with their titles.
pub const CHARTS: [(&str, &str); 4] = [
    ("treated_frac", "Treated fraction"),
    ("exp_welfare", "Expected welfare"),
    ("worst_welfare", "Worst-case welfare"),
    ("worst_improvement", "Worst-case improvement"),
];

fn color(m: Method) -> &'static str {
    match m {
        Method::Aw => "#1f77b4",
        Method::Mmw => "#d62728",
        Method::Mmi => "#2ca02c",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders `metric` against `log_lambda`. Rows for other metrics are
/// ignored; unknown metrics yield an empty chart frame.
pub fn line_chart(rows: &[SummaryRow], metric: &str, title: &str) -> String {
    let mut methods: Vec<Method> = rows.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();

    let pts: Vec<(Method, f64, f64, f64, f64)> = rows
        .iter()
        .filter_map(|r| r.band(metric).map(|b| (r.method, r.log_lambda, b.mean, b.lo, b.hi)))
        .collect();
    let (mut x0, mut x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let (mut y0, mut y1) =
        pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.3), b.max(p.4)));
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for k in 0..=5 {
        let fx = x0 + (x1 - x0) * f64::from(k) / 5.0;
        let fy = y0 + (y1 - y0) * f64::from(k) / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{fx:.2}</text>"#,
            sx(fx),
            HEIGHT - BOTTOM + 18.0
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{fy:.3}</text>"#, LEFT - 6.0, sy(fy) + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">log lambda</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 16.0
    );

    for (k, &m) in methods.iter().enumerate() {
        let mut line: Vec<_> = pts.iter().filter(|p| p.0 == m).collect();
        line.sort_by(|a, b| a.1.total_cmp(&b.1));
        let upper: Vec<String> = line.iter().map(|p| format!("{:.2},{:.2}", sx(p.1), sy(p.4))).collect();
        let lower: Vec<String> = line.iter().rev().map(|p| format!("{:.2},{:.2}", sx(p.1), sy(p.3))).collect();
        let _ = writeln!(
            s,
            r#"<polygon class="band" data-method="{m}" points="{} {}" fill="{}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" "),
            color(m)
        );
        let mean: Vec<String> = line.iter().map(|p| format!("{:.2},{:.2}", sx(p.1), sy(p.2))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="mean" data-method="{m}" points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            mean.join(" "),
            color(m)
        );
        let ly = TOP + 20.0 + 22.0 * k as f64;
        let lx = WIDTH - RIGHT + 16.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{m}</text>"#,
            lx + 24.0,
            color(m),
            lx + 30.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}
