//! Log-log line plots written directly as SVG 1.1.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

pub struct Series<'a> {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
    pub color: &'a str,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn usable(p: &(f64, f64)) -> bool {
    p.0 > 0.0 && p.1 > 0.0 && p.0.is_finite() && p.1.is_finite()
}

/// Decade range `[10^lo, 10^hi]` covering all positive values.
fn decades(values: impl Iterator<Item = f64>) -> Option<(i32, i32)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return None;
    }
    let (a, mut b) = (lo.log10().floor() as i32, hi.log10().ceil() as i32);
    if b <= a {
        b = a + 1;
    }
    Some((a, b))
}

pub fn palette(i: usize) -> &'static str {
    COLORS[i % COLORS.len()]
}

/// One panel: every series drawn as a polyline, broken where values are not
/// positive.
pub fn render(title: &str, x_label: &str, series: &[Series<'_>]) -> String {
    let pts = || series.iter().flat_map(|s| s.points.iter().filter(|p| usable(p)));
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (Some((x0, x1)), Some((y0, y1))) = (decades(pts().map(|p| p.0)), decades(pts().map(|p| p.1))) else {
        svg.push_str("<text x=\"320\" y=\"220\" text-anchor=\"middle\">no positive data</text>\n</svg>\n");
        return svg;
    };
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x.log10() - x0 as f64) / (x1 - x0) as f64 * pw;
    let sy = |y: f64| TOP + ph - (y.log10() - y0 as f64) / (y1 - y0) as f64 * ph;

    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let y_step = ((y1 - y0) as f64 / 10.0).ceil().max(1.0) as i32;
    for k in x0..=x1 {
        let x = sx(10f64.powi(k));
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/>
<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{k}</text>"##,
            TOP + ph,
            TOP + ph + 18.0
        );
    }
    for k in (y0..=y1).filter(|k| (k - y0) % y_step == 0) {
        let y = sy(10f64.powi(k));
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>
<text x="{:.2}" y="{:.2}" text-anchor="end">1e{k}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );

    for s in series {
        let mut d = String::new();
        let mut pen_down = false;
        for p in &s.points {
            if usable(p) {
                let _ = write!(d, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, sx(p.0), sy(p.1));
                pen_down = true;
            } else {
                pen_down = false;
            }
        }
        if d.is_empty() {
            continue;
        }
        let _ = writeln!(
            svg,
            r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"{}/>"#,
            d.trim_end(),
            s.color,
            if s.dashed { r#" stroke-dasharray="5,4""# } else { "" }
        );
    }

    for (i, s) in series.iter().enumerate() {
        let y = TOP + 16.0 + 16.0 * i as f64;
        let x = LEFT + pw - 150.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="2"{}/>
<text x="{:.2}" y="{y:.2}">{}</text>"#,
            y - 4.0,
            x + 22.0,
            y - 4.0,
            s.color,
            if s.dashed { r#" stroke-dasharray="5,4""# } else { "" },
            x + 28.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
