//! Static SVG plots. Coordinates are printed with fixed precision so equal
//! inputs always give byte-identical files.

use std::fmt::Write as _;

use crate::stats::{BoxSummary, VolumeReport};

const WIDTH: f64 = 420.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;

fn header(out: &mut String, width: f64, height: f64, title: &str) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(out, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#, width / 2.0, escape(title)).unwrap();
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Upper axis bound: the largest value padded by 5%, at least 1.
fn axis_max(values: impl Iterator<Item = f64>) -> f64 {
    let m = values.fold(0.0f64, f64::max);
    if m <= 0.0 {
        1.0
    } else {
        m * 1.05
    }
}

fn ticks(out: &mut String, max: f64, horizontal: bool) {
    for i in 0..=4 {
        let v = max * i as f64 / 4.0;
        let t = i as f64 / 4.0;
        if horizontal {
            let x = MARGIN + t * (WIDTH - 2.0 * MARGIN);
            writeln!(out, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{v:.0}</text>"#, HEIGHT - MARGIN + 16.0).unwrap();
        } else {
            let y = HEIGHT - MARGIN - t * (HEIGHT - 2.0 * MARGIN);
            writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.0}</text>"#, MARGIN - 6.0, y + 4.0).unwrap();
        }
    }
}

/// Actual vs predicted volume with the identity line in red and points in gray.
pub fn scatter_svg(report: &VolumeReport) -> String {
    let max = axis_max(report.pairs.iter().flat_map(|p| [p.actual, p.predicted]));
    let span = WIDTH - 2.0 * MARGIN;
    let px = |v: f64| MARGIN + v / max * span;
    let py = |v: f64| HEIGHT - MARGIN - v / max * span;
    let mut out = String::new();
    header(&mut out, WIDTH, HEIGHT, &format!("{}: predicted vs actual volume", report.model_id));
    writeln!(
        out,
        r#"<rect x="{MARGIN:.1}" y="{MARGIN:.1}" width="{span:.1}" height="{span:.1}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(out, r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="red" stroke-width="1.5"/>"#, px(0.0), py(0.0), px(max), py(max))
        .unwrap();
    for p in &report.pairs {
        writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="gray" fill-opacity="0.8"/>"#, px(p.actual), py(p.predicted)).unwrap();
    }
    ticks(&mut out, max, true);
    ticks(&mut out, max, false);
    writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">actual volume (mm³)</text>"#, WIDTH / 2.0, HEIGHT - 12.0).unwrap();
    writeln!(
        out,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">predicted volume (mm³)</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    )
    .unwrap();
    out.push_str("</svg>\n");
    out
}

fn draw_box(out: &mut String, b: &BoxSummary, x: f64, w: f64, py: &impl Fn(f64) -> f64, fill: &str) {
    let mid = x + w / 2.0;
    writeln!(out, r#"<line x1="{mid:.1}" y1="{:.2}" x2="{mid:.1}" y2="{:.2}" stroke="black"/>"#, py(b.min), py(b.q1)).unwrap();
    writeln!(out, r#"<line x1="{mid:.1}" y1="{:.2}" x2="{mid:.1}" y2="{:.2}" stroke="black"/>"#, py(b.q3), py(b.max)).unwrap();
    for v in [b.min, b.max] {
        writeln!(out, r#"<line x1="{:.1}" y1="{:.2}" x2="{:.1}" y2="{:.2}" stroke="black"/>"#, x + w * 0.25, py(v), x + w * 0.75, py(v)).unwrap();
    }
    writeln!(
        out,
        r#"<rect x="{x:.1}" y="{:.2}" width="{w:.1}" height="{:.2}" fill="{fill}" stroke="black"/>"#,
        py(b.q3),
        (py(b.q1) - py(b.q3)).max(0.0)
    )
    .unwrap();
    writeln!(out, r#"<line x1="{x:.1}" y1="{:.2}" x2="{:.1}" y2="{:.2}" stroke="black" stroke-width="2"/>"#, py(b.median), x + w, py(b.median))
        .unwrap();
}

/// Side-by-side box plots of actual and predicted volumes for each report.
pub fn box_plot_svg(reports: &[VolumeReport]) -> String {
    let groups = reports.len().max(1) as f64;
    let width = (2.0 * MARGIN + groups * 140.0).max(WIDTH);
    let max = axis_max(reports.iter().flat_map(|r| [r.actual_box.max, r.predicted_box.max]));
    let span = HEIGHT - 2.0 * MARGIN;
    let py = |v: f64| HEIGHT - MARGIN - v / max * span;
    let mut out = String::new();
    header(&mut out, width, HEIGHT, "lesion volume: actual (blue) vs predicted (orange)");
    ticks(&mut out, max, false);
    writeln!(out, r#"<line x1="{MARGIN:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#, py(0.0), width - MARGIN, py(0.0)).unwrap();
    let slot = (width - 2.0 * MARGIN) / groups;
    for (i, r) in reports.iter().enumerate() {
        let x0 = MARGIN + i as f64 * slot;
        draw_box(&mut out, &r.actual_box, x0 + slot * 0.15, slot * 0.3, &py, "#9ecae1");
        draw_box(&mut out, &r.predicted_box, x0 + slot * 0.55, slot * 0.3, &py, "#fdae6b");
        writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, x0 + slot / 2.0, HEIGHT - MARGIN + 18.0, escape(&r.model_id))
            .unwrap();
    }
    writeln!(
        out,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">volume (mm³)</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    )
    .unwrap();
    out.push_str("</svg>\n");
    out
}

/// Grayscale image with the reference mask outlined in green and the
/// prediction filled in translucent red. `image` is row-major `rows x cols`.
pub fn overlay_svg(title: &str, rows: usize, cols: usize, image: &[f32], truth: &[u8], pred: &[u8]) -> String {
    let cell = (360.0 / rows.max(cols) as f64).max(1.0);
    let (w, h) = (cols as f64 * cell, rows as f64 * cell);
    let (lo, hi) = image.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = if hi > lo { hi - lo } else { 1.0 };
    let mut out = String::new();
    header(&mut out, w + 20.0, h + 40.0, title);
    writeln!(out, r#"<g transform="translate(10 30)" shape-rendering="crispEdges">"#).unwrap();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            let g = (((image[i] - lo) / range) * 255.0).round() as u8;
            let (x, y) = (c as f64 * cell, r as f64 * cell);
            writeln!(out, r#"<rect x="{x:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({g},{g},{g})"/>"#).unwrap();
            if pred[i] == 1 {
                writeln!(out, r#"<rect x="{x:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="red" fill-opacity="0.45"/>"#).unwrap();
            }
        }
    }
    let inside = |r: isize, c: isize| r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols && truth[r as usize * cols + c as usize] == 1;
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            if !inside(r, c) {
                continue;
            }
            let (x, y) = (c as f64 * cell, r as f64 * cell);
            let edges = [
                (!inside(r - 1, c), (x, y, x + cell, y)),
                (!inside(r + 1, c), (x, y + cell, x + cell, y + cell)),
                (!inside(r, c - 1), (x, y, x, y + cell)),
                (!inside(r, c + 1), (x + cell, y, x + cell, y + cell)),
            ];
            for (open, (x1, y1, x2, y2)) in edges {
                if open {
                    writeln!(out, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="lime" stroke-width="1.5"/>"#).unwrap();
                }
            }
        }
    }
    out.push_str("</g>\n</svg>\n");
    out
}
