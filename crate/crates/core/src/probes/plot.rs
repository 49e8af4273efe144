//! Minimal SVG scatter plots for report series.

use std::fmt::Write as _;

use super::Series;

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 48.0;

/// Whether both axes can be drawn on a log scale.
pub fn loglog_ok(s: &Series) -> bool {
    !s.is_empty() && s.x.iter().chain(&s.y).all(|&v| v > 0.0 && v.is_finite())
}

fn range(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter plot with straight segments between consecutive points.
pub fn svg_scatter(title: &str, s: &Series, loglog: bool) -> String {
    let tf = |v: f64| if loglog { v.ln() } else { v };
    let xs: Vec<f64> = s.x.iter().map(|&v| tf(v)).filter(|v| v.is_finite()).collect();
    let ys: Vec<f64> = s.y.iter().map(|&v| tf(v)).filter(|v| v.is_finite()).collect();
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="13" text-anchor="middle">{}{}</text>"#,
        W / 2.0,
        escape(title),
        if loglog { " (log-log)" } else { "" }
    );
    let _ = writeln!(
        out,
        r#"<path d="M{PAD} {PAD} L{PAD} {} L{} {}" stroke="black" fill="none"/>"#,
        H - PAD,
        W - PAD,
        H - PAD
    );
    if xs.len() == s.len() && ys.len() == s.len() && !xs.is_empty() {
        let (x0, x1) = range(&xs);
        let (y0, y1) = range(&ys);
        let px = |v: f64| PAD + (v - x0) / (x1 - x0) * (W - 2.0 * PAD);
        let py = |v: f64| H - PAD - (v - y0) / (y1 - y0) * (H - 2.0 * PAD);
        let pts: Vec<String> = xs.iter().zip(&ys).map(|(&a, &b)| format!("{:.2},{:.2}", px(a), py(b))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" stroke="steelblue" fill="none"/>"#, pts.join(" "));
        for (&a, &b) in xs.iter().zip(&ys) {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#, px(a), py(b));
        }
        let label = |v: f64| if loglog { format!("{:.3e}", v.exp()) } else { format!("{v:.3e}") };
        let _ = writeln!(out, r#"<text x="{PAD}" y="{}" font-size="10" font-family="sans-serif">{}</text>"#, H - PAD + 14.0, label(x0));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="10" font-family="sans-serif" text-anchor="end">{}</text>"#,
            W - PAD,
            H - PAD + 14.0,
            label(x1)
        );
        let _ = writeln!(out, r#"<text x="4" y="{}" font-size="10" font-family="sans-serif">{}</text>"#, H - PAD, label(y0));
        let _ = writeln!(out, r#"<text x="4" y="{}" font-size="10" font-family="sans-serif">{}</text>"#, PAD, label(y1));
    }
    out.push_str("</svg>\n");
    out
}
