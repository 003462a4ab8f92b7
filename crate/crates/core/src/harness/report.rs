use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::aggregate::ConditionSummary;
use super::files::format_seconds;
use super::pipeline::ExperimentReport;
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Svg,
}

const CURVE_HEADER: &str = "offset,mean_relative_asynchrony_s,sem_s,n";

fn optional(value: Option<f64>) -> String {
    value.map(format_seconds).unwrap_or_default()
}

pub fn curve_csv(summary: &ConditionSummary) -> String {
    let mut text = format!("{CURVE_HEADER}\n");
    for point in &summary.curve {
        let _ = writeln!(
            text,
            "{},{},{},{}",
            point.offset,
            optional(point.mean),
            optional(point.sem),
            point.n
        );
    }
    text
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

pub fn write_curve_csv(path: &Path, summary: &ConditionSummary) -> Result<(), HarnessError> {
    write_file(path, &curve_csv(summary))
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

/// Mean relative asynchrony (ms) against step offset, with SEM bars, a dotted
/// zero line and a dashed marker at the perturbation.
pub fn render_svg(summary: &ConditionSummary) -> String {
    let points: Vec<(i64, f64, f64)> = summary
        .curve
        .iter()
        .filter_map(|p| p.mean.map(|m| (p.offset, 1000.0 * m, 1000.0 * p.sem.unwrap_or(0.0))))
        .collect();
    let (lo_x, hi_x) = match (summary.curve.first(), summary.curve.last()) {
        (Some(a), Some(b)) => (a.offset as f64, b.offset as f64),
        _ => (-4.0, 6.0),
    };
    let mut lo_y = points.iter().map(|p| p.1 - p.2).fold(0.0, f64::min);
    let mut hi_y = points.iter().map(|p| p.1 + p.2).fold(0.0, f64::max);
    if hi_y - lo_y < 1e-9 {
        lo_y -= 1.0;
        hi_y += 1.0;
    }
    let pad = 0.08 * (hi_y - lo_y);
    lo_y -= pad;
    hi_y += pad;

    let px = |x: f64| LEFT + (x - lo_x) / (hi_x - lo_x) * (WIDTH - LEFT - RIGHT);
    let py = |y: f64| TOP + (hi_y - y) / (hi_y - lo_y) * (HEIGHT - TOP - BOTTOM);
    let (x0, x1, y0, y1) = (px(lo_x), px(hi_x), py(lo_y), py(hi_y));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        summary.label()
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for offset in lo_x as i64..=hi_x as i64 {
        let x = px(offset as f64);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{offset}</text>"#,
            y0 + 5.0,
            y0 + 18.0
        );
    }
    for i in 0..=4 {
        let value = lo_y + (hi_y - lo_y) * i as f64 / 4.0;
        let y = py(value);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{value:.1}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Step relative to perturbation</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">Relative asynchrony (ms)</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    let zero = py(0.0);
    let _ = writeln!(
        svg,
        r#"<line x1="{x0:.2}" y1="{zero:.2}" x2="{x1:.2}" y2="{zero:.2}" stroke="gray" stroke-dasharray="2,3"/>"#
    );
    let marker = px(0.0);
    let _ = writeln!(
        svg,
        r#"<line x1="{marker:.2}" y1="{y0:.2}" x2="{marker:.2}" y2="{y1:.2}" stroke="firebrick" stroke-dasharray="6,4"/>"#
    );

    // Consecutive offsets are joined; a missing offset breaks the line.
    let mut segment: Vec<String> = Vec::new();
    let mut previous: Option<i64> = None;
    let flush = |segment: &mut Vec<String>, svg: &mut String| {
        if segment.len() > 1 {
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
                segment.join(" ")
            );
        }
        segment.clear();
    };
    for &(offset, mean, sem) in &points {
        if previous.is_some_and(|p| p + 1 != offset) {
            flush(&mut segment, &mut svg);
        }
        let (x, y) = (px(offset as f64), py(mean));
        segment.push(format!("{x:.2},{y:.2}"));
        previous = Some(offset);
        if sem > 0.0 {
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="steelblue"/>"#,
                py(mean - sem),
                py(mean + sem)
            );
        }
    }
    flush(&mut segment, &mut svg);
    for &(offset, mean, _) in &points {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="steelblue"/>"#,
            px(offset as f64),
            py(mean)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `curves/<cell>.csv` and/or `plots/<cell>.svg` for every summary.
/// Returns the paths written, in order.
pub fn emit_report(
    report: &ExperimentReport,
    out_dir: &Path,
    formats: &[Format],
) -> Result<Vec<PathBuf>, HarnessError> {
    let mut written = Vec::new();
    for summary in &report.summaries {
        let stem = summary.label();
        if formats.contains(&Format::Csv) {
            let path = out_dir.join("curves").join(format!("{stem}.csv"));
            write_curve_csv(&path, summary)?;
            written.push(path);
        }
        if formats.contains(&Format::Svg) {
            let path = out_dir.join("plots").join(format!("{stem}.svg"));
            write_file(&path, &render_svg(summary))?;
            written.push(path);
        }
    }
    Ok(written)
}
