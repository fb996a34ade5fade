//! Minimal static step-chart SVG for ECDF overlays.

use std::fmt::Write as _;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 40.0;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    /// Sorted sample values.
    pub values: &'a [f64],
}

/// Step plots of the ECDFs of each series on shared axes.
pub fn ecdf_overlay(title: &str, series: &[Series]) -> String {
    let lo = series
        .iter()
        .filter_map(|s| s.values.first())
        .fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = series
        .iter()
        .filter_map(|s| s.values.last())
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    };
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let px = |v: f64| MARGIN + (v - lo) / (hi - lo) * (WIDTH - 2.0 * MARGIN);
    let py = |p: f64| HEIGHT - MARGIN - p * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.3}</text>"#,
            px(v),
            HEIGHT - MARGIN + 14.0,
            v
        );
        let p = i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.2}</text>"#,
            MARGIN - 4.0,
            py(p) + 4.0,
            p
        );
    }
    for (k, ser) in series.iter().enumerate() {
        let n = ser.values.len() as f64;
        let mut d = format!("M{:.2},{:.2}", px(lo), py(0.0));
        for (i, &v) in ser.values.iter().enumerate() {
            let _ = write!(d, " H{:.2} V{:.2}", px(v), py((i + 1) as f64 / n));
        }
        let _ = write!(d, " H{:.2}", px(hi));
        let _ = writeln!(
            s,
            r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            ser.color
        );
        let y = MARGIN + 14.0 + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{y:.1}" fill="{}">{}</text>"#,
            MARGIN + 6.0,
            ser.color,
            escape(ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
