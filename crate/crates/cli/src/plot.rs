//! Static SVG 1.1 coverage/length figures.

use std::fmt::Write as _;

pub struct Series {
    pub label: String,
    pub color: &'static str,
    /// Marker shape index: 0 circle, 1 square, 2 triangle, 3 diamond.
    pub marker: usize,
    /// Per group, `None` where the method has no cell.
    pub coverage: Vec<Option<f64>>,
    pub length: Vec<Option<f64>>,
}

const WIDTH: f64 = 640.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const PANEL_H: f64 = 200.0;
const TOP_1: f64 = 50.0;
const TOP_2: f64 = 310.0;
const LEGEND_TOP: f64 = 545.0;
const LEGEND_ROW: f64 = 18.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Round tick spacing (1, 2 or 5 times a power of ten) giving about four intervals.
pub fn nice_step(max: f64) -> f64 {
    if !max.is_finite() || max <= 0.0 {
        return 1.0;
    }
    let raw = max / 4.0;
    let pow = 10f64.powf(raw.log10().floor());
    let frac = raw / pow;
    let mult = if frac <= 1.0 {
        1.0
    } else if frac <= 2.0 {
        2.0
    } else if frac <= 5.0 {
        5.0
    } else {
        10.0
    };
    mult * pow
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 {
        0
    } else {
        (-step.log10() - 1e-9).ceil() as usize
    };
    format!("{v:.decimals$}")
}

fn marker(out: &mut String, shape: usize, x: f64, y: f64, color: &str) {
    let _ = match shape % 4 {
        0 => writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}"/>"#),
        1 => writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="{color}"/>"#,
            x - 4.0,
            y - 4.0
        ),
        2 => writeln!(
            out,
            r#"<polygon points="{x:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
            y - 5.0,
            x - 5.0,
            y + 4.0,
            x + 5.0,
            y + 4.0
        ),
        _ => writeln!(
            out,
            r#"<polygon points="{x:.2},{:.2} {:.2},{y:.2} {x:.2},{:.2} {:.2},{y:.2}" fill="{color}"/>"#,
            y - 5.0,
            x + 5.0,
            y + 5.0,
            x - 5.0
        ),
    };
}

struct Panel<'a> {
    top: f64,
    y_max: f64,
    step: f64,
    title: &'a str,
    y_label: &'a str,
    reference: Option<f64>,
}

fn x_of(groups: usize, g: usize, s: usize, n_series: usize) -> f64 {
    let band = (WIDTH - LEFT - RIGHT) / groups as f64;
    let offset = if n_series > 1 {
        (s as f64 / (n_series - 1) as f64 - 0.5) * band * 0.4
    } else {
        0.0
    };
    LEFT + band * (g as f64 + 0.5) + offset
}

fn draw_panel(
    out: &mut String,
    p: &Panel,
    groups: usize,
    series: &[Series],
    values: impl Fn(&Series) -> &[Option<f64>],
) {
    let y_of = |v: f64| p.top + PANEL_H * (1.0 - v / p.y_max);
    let right = WIDTH - RIGHT;
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        p.top - 10.0,
        escape(p.title)
    );
    let mut tick = 0.0;
    let mut i = 0;
    while tick <= p.y_max + 1e-9 {
        let y = y_of(tick);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{right:.2}" y2="{y:.2}" stroke="#dddddd" stroke-width="1"/>"##
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            fmt_tick(tick, p.step)
        );
        i += 1;
        tick = p.step * i as f64;
    }
    let bottom = p.top + PANEL_H;
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT:.2}" y="{:.2}" width="{:.2}" height="{PANEL_H:.2}" fill="none" stroke="black" stroke-width="1"/>"#,
        p.top,
        right - LEFT
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
        20.0,
        p.top + PANEL_H / 2.0,
        20.0,
        p.top + PANEL_H / 2.0,
        escape(p.y_label)
    );
    for g in 0..groups {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"#,
            x_of(groups, g, 0, 1),
            bottom + 16.0,
            g + 1
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">sorted group</text>"#,
        (LEFT + right) / 2.0,
        bottom + 32.0
    );
    if let Some(r) = p.reference {
        let y = y_of(r);
        let _ = writeln!(
            out,
            r#"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{right:.2}" y2="{y:.2}" stroke="gray" stroke-width="1.5" stroke-dasharray="6,4"/>"#
        );
    }
    for (s, series_s) in series.iter().enumerate() {
        let vals = values(series_s);
        let points: Vec<(f64, f64)> = vals
            .iter()
            .enumerate()
            .filter_map(|(g, v)| v.map(|v| (x_of(groups, g, s, series.len()), y_of(v.clamp(0.0, p.y_max)))))
            .collect();
        if points.len() > 1 {
            let path: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                path.join(" "),
                series_s.color
            );
        }
        for (x, y) in points {
            marker(out, series_s.marker, x, y, series_s.color);
        }
    }
}

/// Coverage panel on top (fixed [0, 1] axis, dashed nominal line), average
/// CI length panel below, one series per method.
pub fn render(title: &str, nominal: f64, groups: usize, series: &[Series]) -> String {
    let height = LEGEND_TOP + LEGEND_ROW * series.len() as f64 + 10.0;
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let coverage = Panel {
        top: TOP_1,
        y_max: 1.0,
        step: 0.2,
        title: &format!("Empirical coverage (nominal {nominal})"),
        y_label: "coverage",
        reference: Some(nominal),
    };
    draw_panel(&mut out, &coverage, groups, series, |s| &s.coverage);
    let max_len = series
        .iter()
        .flat_map(|s| s.length.iter().flatten())
        .fold(0.0f64, |a, &b| if b.is_finite() { a.max(b) } else { a });
    let step = nice_step(max_len * 1.05);
    let y_max = if max_len > 0.0 {
        (max_len * 1.05 / step).ceil() * step
    } else {
        1.0
    };
    let length = Panel {
        top: TOP_2,
        y_max,
        step,
        title: "Average confidence interval length",
        y_label: "length",
        reference: None,
    };
    draw_panel(&mut out, &length, groups, series, |s| &s.length);
    for (i, s) in series.iter().enumerate() {
        let y = LEGEND_TOP + LEGEND_ROW * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{}" stroke-width="1.5"/>"#,
            LEFT + 24.0,
            s.color
        );
        marker(&mut out, s.marker, LEFT + 12.0, y, s.color);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="12">{}</text>"#,
            LEFT + 32.0,
            y + 4.0,
            escape(&s.label)
        );
    }
    let _ = writeln!(out, "</svg>");
    out
}
