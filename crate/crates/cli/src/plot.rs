//! Minimal deterministic SVG line charts.
//!
//! The output is a pure function of the input series: fixed canvas, fixed
//! palette, fixed decimal formatting. NaN values split a polyline into
//! segments instead of poisoning the path, which is how gapped series
//! (a degenerate concentration probe mid-run) stay plottable.

use crate::CliError;
use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 16.0;
const MARGIN_B: f64 = 36.0;

const PALETTE: [&str; 6] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Series {
        Series { name: name.into(), values }
    }
}

/// Renders the series as one SVG document, x axis = sample index.
pub fn render_plot(series: &[Series]) -> Result<String, CliError> {
    if series.is_empty() || series.iter().all(|s| s.values.is_empty()) {
        return Err(CliError::EmptyPlot);
    }
    let finite: Vec<f64> = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .filter(|v| v.is_finite())
        .collect();
    if finite.is_empty() {
        return Err(CliError::EmptyPlot);
    }
    let (mut y_lo, mut y_hi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if y_hi - y_lo < 1e-12 {
        // Flat data still needs a visible band.
        y_lo -= 1.0;
        y_hi += 1.0;
    }
    let x_max = series.iter().map(|s| s.values.len()).max().unwrap_or(1).saturating_sub(1).max(1);

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x_of = |i: usize| MARGIN_L + plot_w * i as f64 / x_max as f64;
    let y_of = |v: f64| MARGIN_T + plot_h * (1.0 - (v - y_lo) / (y_hi - y_lo));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="monospace" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    // Axes.
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        MARGIN_L,
        MARGIN_T,
        MARGIN_L,
        HEIGHT - MARGIN_B
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        MARGIN_L,
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    );
    // Axis labels: y range and x extent.
    let _ = writeln!(
        svg,
        r#"<text x="4" y="{:.2}">{:.3e}</text>"#,
        MARGIN_T + 10.0,
        y_hi
    );
    let _ = writeln!(
        svg,
        r#"<text x="4" y="{:.2}">{:.3e}</text>"#,
        HEIGHT - MARGIN_B,
        y_lo
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
        WIDTH - MARGIN_R - 40.0,
        HEIGHT - 8.0,
        x_max
    );
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">0</text>"#, MARGIN_L, HEIGHT - 8.0);

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        // Break the series into finite runs; each run becomes a polyline.
        let mut run: Vec<(usize, f64)> = Vec::new();
        let flush = |run: &mut Vec<(usize, f64)>, svg: &mut String| {
            if run.len() == 1 {
                let (i, v) = run[0];
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}"/>"#,
                    x_of(i),
                    y_of(v)
                );
            } else if run.len() > 1 {
                let mut points = String::new();
                for &(i, v) in run.iter() {
                    let _ = write!(points, "{:.2},{:.2} ", x_of(i), y_of(v));
                }
                let _ = writeln!(
                    svg,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    points.trim_end()
                );
            }
            run.clear();
        };
        for (i, &v) in s.values.iter().enumerate() {
            if v.is_finite() {
                run.push((i, v));
            } else {
                flush(&mut run, &mut svg);
            }
        }
        flush(&mut run, &mut svg);
        // Legend entry, stacked top-right.
        let ly = MARGIN_T + 14.0 * si as f64 + 10.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{color}"/>"#,
            WIDTH - MARGIN_R - 150.0,
            ly - 9.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            WIDTH - MARGIN_R - 136.0,
            ly,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
