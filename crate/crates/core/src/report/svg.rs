//! Minimal static plots.

use std::fmt::Write;

use super::{Curve, ForestRow};

const WIDTH: f64 = 640.0;
const LEFT: f64 = 150.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 30.0;
const ROW: f64 = 28.0;
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-9);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-12 {
        out.push(t);
        t += step;
    }
    out
}

/// Odds ratios with intervals on a log axis, one row per contrast.
pub fn forest_svg(rows: &[ForestRow]) -> String {
    let height = TOP + ROW * rows.len() as f64 + 50.0;
    let logs: Vec<f64> = rows.iter().flat_map(|r| [r.lower.ln(), r.upper.ln()]).filter(|v| v.is_finite()).collect();
    let lo = logs.iter().copied().fold(0f64, f64::min) - 0.1;
    let hi = logs.iter().copied().fold(0f64, f64::max) + 0.1;
    let px = |or: f64| LEFT + (or.ln() - lo) / (hi - lo) * (WIDTH - LEFT - RIGHT);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let bottom = TOP + ROW * rows.len() as f64;
    let _ = writeln!(s, r##"<line x1="{0}" y1="{TOP}" x2="{0}" y2="{bottom}" stroke="#999" stroke-dasharray="4 3"/>"##, px(1.0));
    for (i, r) in rows.iter().enumerate() {
        let y = TOP + ROW * (i as f64 + 0.5);
        let _ = writeln!(s, r#"<text x="10" y="{}">{} vs {}</text>"#, y + 4.0, escape(&r.treatment), escape(&r.reference));
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y}" x2="{:.2}" y2="{y}" stroke="black"/><circle cx="{:.2}" cy="{y}" r="4"/>"#,
            px(r.lower),
            px(r.upper),
            px(r.median)
        );
    }
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{bottom}" x2="{}" y2="{bottom}" stroke="black"/>"#, WIDTH - RIGHT);
    for t in nice_ticks(lo, hi) {
        let or = t.exp();
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{:.2}</text>"#,
            px(or),
            bottom + 16.0,
            or
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">Odds ratio</text>"#, (LEFT + WIDTH - RIGHT) / 2.0, bottom + 36.0);
    s.push_str("</svg>\n");
    s
}

/// Odds-ratio curves with shaded interval bands.
pub fn curves_svg(curves: &[Curve]) -> String {
    let (w, h) = (WIDTH, 400.0);
    let (l, r, t, b) = (60.0, 120.0, 20.0, 50.0);
    let pts = curves.iter().flat_map(|c| c.points.iter());
    let xs: Vec<f64> = pts.clone().map(|p| p.x).collect();
    let ys: Vec<f64> = pts.flat_map(|p| [p.lower, p.upper]).filter(|v| v.is_finite()).collect();
    let (x0, x1) = (xs.iter().copied().fold(f64::INFINITY, f64::min), xs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let y0 = ys.iter().copied().fold(f64::INFINITY, f64::min).min(1.0);
    let y1 = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(1.0);
    let sx = |x: f64| l + (x - x0) / (x1 - x0).max(1e-9) * (w - l - r);
    let sy = |y: f64| h - b - (y - y0) / (y1 - y0).max(1e-9) * (h - t - b);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    for (i, c) in curves.iter().enumerate() {
        let col = COLOURS[i % COLOURS.len()];
        let mut band: Vec<String> = c.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.upper))).collect();
        band.extend(c.points.iter().rev().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.lower))));
        let _ = writeln!(s, r#"<polygon points="{}" fill="{col}" fill-opacity="0.15" stroke="none"/>"#, band.join(" "));
        let line: Vec<String> = c.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.median))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{col}" stroke-width="2"/>"#, line.join(" "));
        let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{col}">{}</text>"#, w - r + 10.0, t + 16.0 * (i as f64 + 1.0), escape(&c.treatment));
    }
    let _ = writeln!(s, r##"<line x1="{l}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#999" stroke-dasharray="4 3"/>"##, sy(1.0), w - r);
    let _ = writeln!(s, r#"<line x1="{l}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#, h - b, w - r);
    let _ = writeln!(s, r#"<line x1="{l}" y1="{t}" x2="{l}" y2="{}" stroke="black"/>"#, h - b);
    for tx in nice_ticks(x0, x1) {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{tx}</text>"#, sx(tx), h - b + 16.0);
    }
    for ty in nice_ticks(y0, y1) {
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{ty:.2}</text>"#, l - 6.0, sy(ty) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">Covariate</text>"#, (l + w - r) / 2.0, h - 12.0);
    s.push_str("</svg>\n");
    s
}
