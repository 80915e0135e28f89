//! Minimal standalone SVG scatter plots of fronts.

use std::fmt::Write as _;

use log::warn;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    LogLog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: f64,
    pub height: f64,
    /// Fixed axis ranges in data units; automatic when `None`.
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self {
            title: String::new(),
            x_label: "L_DATA".into(),
            y_label: "L_PHYSICS".into(),
            width: 640.0,
            height: 480.0,
            x_range: None,
            y_range: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvgPlot {
    pub svg: String,
    /// Points dropped because a log axis cannot show them.
    pub dropped: usize,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 140.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn auto_range(values: impl Iterator<Item = f64>, log: bool) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        return (lo - pad, hi + pad);
    }
    // One distinct value: a unit interval (one decade in log space) either side,
    // or proportional for values larger than 1 in magnitude.
    let half = if log { 1.0 } else { lo.abs().max(1.0) };
    (lo - half, hi + half)
}

fn ticks(lo: f64, hi: f64, log: bool) -> Vec<f64> {
    if log {
        let decades: Vec<f64> = (lo.ceil() as i64..=hi.floor() as i64).map(|d| d as f64).collect();
        if decades.len() >= 2 {
            return decades;
        }
    }
    (0..=4).map(|k| lo + (hi - lo) * k as f64 / 4.0).collect()
}

fn tick_label(v: f64, log: bool) -> String {
    if log {
        if v.fract() == 0.0 {
            return format!("1e{}", v as i64);
        }
        return format!("{:.2e}", 10f64.powf(v));
    }
    if v == 0.0 || (1e-2..1e4).contains(&v.abs()) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

/// Renders the series as a scatter plot. On a log-log scale, points with a
/// non-positive coordinate are dropped and counted.
pub fn emit_svg(series: &[Series], scale: Scale, style: &PlotStyle) -> SvgPlot {
    let log = scale == Scale::LogLog;
    let mut dropped = 0;
    let shown: Vec<(usize, Vec<[f64; 2]>)> = series
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let pts: Vec<[f64; 2]> = s
                .points
                .iter()
                .filter_map(|p| {
                    if !p[0].is_finite() || !p[1].is_finite() || (log && (p[0] <= 0.0 || p[1] <= 0.0)) {
                        dropped += 1;
                        None
                    } else if log {
                        Some([p[0].log10(), p[1].log10()])
                    } else {
                        Some(*p)
                    }
                })
                .collect();
            (i, pts)
        })
        .collect();
    if dropped > 0 {
        warn!("svg '{}': {dropped} point(s) cannot be shown on this scale", style.title);
    }
    let total: usize = shown.iter().map(|(_, p)| p.len()).sum();

    let to_axis = |r: (f64, f64)| if log { (r.0.log10(), r.1.log10()) } else { r };
    let (x0, x1) = style
        .x_range
        .map(to_axis)
        .unwrap_or_else(|| auto_range(shown.iter().flat_map(|(_, p)| p.iter().map(|q| q[0])), log));
    let (y0, y1) = style
        .y_range
        .map(to_axis)
        .unwrap_or_else(|| auto_range(shown.iter().flat_map(|(_, p)| p.iter().map(|q| q[1])), log));

    let (w, h) = (style.width, style.height);
    let (left, right) = (MARGIN_LEFT, w - MARGIN_RIGHT);
    let (top, bottom) = (MARGIN_TOP, h - MARGIN_BOTTOM);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
    let py = |y: f64| bottom - (y - y0) / (y1 - y0) * (bottom - top);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        (left + right) / 2.0,
        escape(&style.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{left:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        right - left,
        bottom - top
    );
    for t in ticks(x0, x1, log) {
        let x = px(t);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{bottom:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, bottom + 5.0);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            bottom + 18.0,
            tick_label(t, log)
        );
    }
    for t in ticks(y0, y1, log) {
        let y = py(t);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{left:.2}" y2="{y:.2}" stroke="black"/>"#, left - 5.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 8.0,
            y + 4.0,
            tick_label(t, log)
        );
    }
    let suffix = if log { " (log)" } else { "" };
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}{suffix}</text>"#,
        (left + right) / 2.0,
        h - 10.0,
        escape(&style.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">{}{suffix}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(&style.y_label)
    );

    for (i, pts) in &shown {
        let color = PALETTE[i % PALETTE.len()];
        for p in pts {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" fill-opacity="0.8"/>"#,
                px(p[0]),
                py(p[1])
            );
        }
        let ly = top + 10.0 + 16.0 * *i as f64;
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{ly:.2}" r="4" fill="{color}"/>"#, right + 15.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            right + 25.0,
            ly + 4.0,
            escape(&series[*i].label)
        );
    }
    if total == 0 {
        warn!("svg '{}': no plottable points", style.title);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="red">warning: no plottable points</text>"#,
            (left + right) / 2.0,
            (top + bottom) / 2.0
        );
    }
    if dropped > 0 {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" fill="gray">{dropped} non-positive point(s) not shown</text>"#,
            right + 10.0,
            bottom
        );
    }
    s.push_str("</svg>\n");
    SvgPlot { svg: s, dropped }
}
