use std::fmt::Write;

use super::closed_loop::ClosedLoopLog;

const WIDTH: f64 = 900.0;
const PANEL: f64 = 220.0;
const MARGIN: f64 = 50.0;
const MAX_COLUMNS: usize = 300;
const INPUT_COLORS: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];

/// Three stacked panels: the space-time field, spatial mean against the
/// reference, and the applied inputs.
pub fn render_svg(log: &ClosedLoopLog) -> String {
    let height = 3.0 * (PANEL + MARGIN) + MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    if log.records.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let t_end = log.records.last().map_or(1.0, |r| r.t).max(f64::MIN_POSITIVE);
    let plot_w = WIDTH - 2.0 * MARGIN;

    field_panel(&mut svg, log, MARGIN, plot_w);

    let top = 2.0 * MARGIN + PANEL;
    let means: Vec<(f64, f64)> = log.records.iter().map(|r| (r.t, r.spatial_mean())).collect();
    let refs: Vec<(f64, f64)> = log.records.iter().map(|r| (r.t, r.reference)).collect();
    let (lo, hi) = bounds(means.iter().chain(&refs).map(|p| p.1));
    axes(&mut svg, top, plot_w, "spatial mean (solid) and reference (dashed)", lo, hi, t_end);
    polyline(&mut svg, &refs, top, plot_w, t_end, lo, hi, "#888", Some("6,4"));
    polyline(&mut svg, &means, top, plot_w, t_end, lo, hi, "#1f77b4", None);

    let top = 3.0 * MARGIN + 2.0 * PANEL;
    let n_u = log.records[0].u.len();
    let (lo, hi) = bounds(log.records.iter().flat_map(|r| r.u.iter().copied()));
    axes(&mut svg, top, plot_w, "inputs", lo, hi, t_end);
    for i in 0..n_u {
        let pts: Vec<(f64, f64)> = log.records.iter().map(|r| (r.t, r.u[i])).collect();
        polyline(&mut svg, &pts, top, plot_w, t_end, lo, hi, INPUT_COLORS[i % INPUT_COLORS.len()], None);
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi - lo < 1e-12 {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn axes(svg: &mut String, top: f64, plot_w: f64, title: &str, lo: f64, hi: f64, t_end: f64) {
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{top}" width="{plot_w}" height="{PANEL}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="{}">{title}</text>"#, top - 8.0);
    let _ = writeln!(svg, r#"<text x="4" y="{}">{hi:.2}</text>"#, top + 12.0);
    let _ = writeln!(svg, r#"<text x="4" y="{}">{lo:.2}</text>"#, top + PANEL);
    let _ = writeln!(svg, r#"<text x="{}" y="{}">{t_end:.1} s</text>"#, MARGIN + plot_w - 40.0, top + PANEL + 16.0);
}

#[allow(clippy::too_many_arguments)]
fn polyline(
    svg: &mut String,
    pts: &[(f64, f64)],
    top: f64,
    plot_w: f64,
    t_end: f64,
    lo: f64,
    hi: f64,
    color: &str,
    dash: Option<&str>,
) {
    let stride = (pts.len() / 2000).max(1);
    let mut coords = String::new();
    for (t, v) in pts.iter().step_by(stride) {
        let x = MARGIN + plot_w * t / t_end;
        let y = top + PANEL * (hi - v) / (hi - lo);
        let _ = write!(coords, "{x:.1},{y:.1} ");
    }
    let dash = dash.map_or(String::new(), |d| format!(r#" stroke-dasharray="{d}""#));
    let _ = writeln!(
        svg,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.2"{dash}/>"#,
        coords.trim_end()
    );
}

fn field_panel(svg: &mut String, log: &ClosedLoopLog, top: f64, plot_w: f64) {
    let (lo, hi) = bounds(log.records.iter().flat_map(|r| r.y.iter().copied()));
    axes(svg, top, plot_w, "field y(t, x)", lo, hi, log.records.last().map_or(0.0, |r| r.t));
    let stride = log.records.len().div_ceil(MAX_COLUMNS);
    let columns: Vec<_> = log.records.iter().step_by(stride).collect();
    let nodes = columns[0].y.len();
    let cw = plot_w / columns.len() as f64;
    let ch = PANEL / nodes as f64;
    for (c, r) in columns.iter().enumerate() {
        for (j, v) in r.y.iter().enumerate() {
            let s = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            // blue (low) to red (high)
            let (red, blue) = ((255.0 * s) as u8, (255.0 * (1.0 - s)) as u8);
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({red},64,{blue})"/>"#,
                MARGIN + c as f64 * cw,
                top + PANEL - (j + 1) as f64 * ch,
                cw + 0.1,
                ch + 0.1
            );
        }
    }
}
