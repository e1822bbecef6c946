use std::fmt::Write as _;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Velocity,
    Trajectory,
    Drift,
}

impl PlotKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "velocity" => Ok(PlotKind::Velocity),
            "trajectory" => Ok(PlotKind::Trajectory),
            "drift" => Ok(PlotKind::Drift),
            other => Err(Error::InvalidParameter(format!(
                "unknown plot kind `{other}`"
            ))),
        }
    }

    fn axes(&self) -> (&'static str, &'static str) {
        match self {
            PlotKind::Velocity => ("time [s]", "velocity [m/s]"),
            PlotKind::Trajectory => ("x [m]", "y [m]"),
            PlotKind::Drift => ("distance travelled [m]", "error [m]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const COLOURS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];
const W: f64 = 800.0;
const H: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

fn fmt(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Ticks at 1, 2 or 5 times a power of ten.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 8.0)
        .unwrap_or(10.0 * mag);
    let mut v = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while v <= hi + 1e-9 * step {
        out.push(if v.abs() < 1e-12 * step { 0.0 } else { v });
        v += step;
    }
    out
}

/// Standalone SVG line plot. Series with a single point are drawn as one
/// marker.
pub fn emit_plot(series: &[Series], kind: PlotKind) -> Result<String> {
    let finite: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    if series.is_empty() || finite.is_empty() {
        return Err(Error::EmptySeries);
    }
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        let lo = finite.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = finite.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = bounds(|p| p.0);
    let (y0, y1) = bounds(|p| p.1);
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (bx, by) = (H - BOTTOM, W - RIGHT);
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{LEFT}" y1="{bx}" x2="{by}" y2="{bx}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{bx}"/></g>"#
    );
    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="12">"#);
    for t in ticks(x0, x1) {
        let x = fmt(px(t));
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{bx}" x2="{x}" y2="{}" stroke="black"/><text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
            bx + 5.0,
            bx + 20.0,
            fmt(t)
        );
    }
    for t in ticks(y0, y1) {
        let y = fmt(py(t));
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{y}" x2="{LEFT}" y2="{y}" stroke="black"/><text x="{}" y="{y}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            fmt(t)
        );
    }
    let (xl, yl) = kind.axes();
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{xl}</text>"#,
        fmt((LEFT + W - RIGHT) / 2.0),
        H - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">{yl}</text>"#,
        fmt((TOP + H - BOTTOM) / 2.0)
    );
    let _ = writeln!(s, "</g>");
    for (i, ser) in series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let pts: Vec<(f64, f64)> = ser
            .points
            .iter()
            .copied()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
        match pts.as_slice() {
            [] => {}
            [(x, y)] => {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{}" cy="{}" r="3" fill="{colour}"/>"#,
                    fmt(px(*x)),
                    fmt(py(*y))
                );
            }
            _ => {
                let list: Vec<String> = pts
                    .iter()
                    .map(|(x, y)| format!("{},{}", fmt(px(*x)), fmt(py(*y))))
                    .collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
                    list.join(" ")
                );
            }
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = W - RIGHT - 180.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="3"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
