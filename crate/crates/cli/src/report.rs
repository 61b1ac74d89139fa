use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ritzlab::analysis::BoundKind;

use crate::commands::trace_path;
use crate::csvio::{read_spectrum, read_traces, Table};
use crate::error::CliError;

/// Errors at or below this value are drawn on it.
pub const ERROR_FLOOR: f64 = 1e-16;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

/// A polyline in data coordinates `(step, value)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub color_index: usize,
    pub style: LineStyle,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineStyle {
    Solid,
    Dashed,
    Dotted,
}

/// Log-scale error plot; `None` values in series are never produced, zero
/// and negative values are clamped at [`ERROR_FLOOR`].
pub fn render_svg(title: &str, series: &[Series]) -> String {
    let mut clamped = false;
    let mut max_x = 1.0f64;
    let mut max_y = 1.0f64;
    for s in series {
        for &(x, y) in &s.points {
            max_x = max_x.max(x);
            if y.is_finite() {
                max_y = max_y.max(y);
            }
            if !(y > ERROR_FLOOR) {
                clamped = true;
            }
        }
    }
    let lo = ERROR_FLOOR.log10();
    let hi = max_y.log10().ceil().max(lo + 1.0);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + pw * x / max_x;
    let py = |y: f64| {
        let l = if y > ERROR_FLOOR { y.log10() } else { lo };
        TOP + ph * (hi - l.min(hi)) / (hi - lo)
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="13">{}</text>"#, LEFT + pw / 2.0, escape(title));
    // axes and decades
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let mut d = lo as i32;
    while d as f64 <= hi {
        let y = py(10f64.powi(d));
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.1}" y="{:.2}" text-anchor="end">1e{d}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        );
        d += 2;
    }
    let xticks = 5usize;
    for k in 0..=xticks {
        let x = max_x * k as f64 / xticks as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.1}" text-anchor="middle">{:.0}</text>"#,
            px(x),
            TOP + ph + 16.0,
            x
        );
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">step</text>"#, LEFT + pw / 2.0, HEIGHT - 12.0);
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">error</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    for (k, s) in series.iter().enumerate() {
        let dash = match s.style {
            LineStyle::Solid => "",
            LineStyle::Dashed => r#" stroke-dasharray="6 4""#,
            LineStyle::Dotted => r#" stroke-dasharray="1 3""#,
        };
        let color = COLORS[s.color_index % COLORS.len()];
        if !s.points.is_empty() {
            let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = TOP + 12.0 + 14.0 * k as f64;
        if ly < HEIGHT - BOTTOM {
            let lx = LEFT + pw + 10.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="1.5"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
                ly - 4.0,
                lx + 24.0,
                ly - 4.0,
                lx + 30.0,
                ly,
                escape(&s.label)
            );
        }
    }
    if clamped {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="10">errors at or below 1e-16 drawn at 1e-16</text>"#,
            LEFT + 4.0,
            TOP + ph - 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Series for the slowest run of `outdir` and the curves in its `bounds.csv`.
pub fn collect_series(outdir: &Path) -> Result<(String, Vec<Series>), CliError> {
    let expected = [outdir.join("summary.csv"), outdir.join("spectrum.csv"), outdir.join("bounds.csv")];
    let missing: Vec<PathBuf> = expected.iter().filter(|p| !p.exists()).cloned().collect();
    if !missing.is_empty() {
        return Err(CliError::MissingInputs(missing));
    }
    let summary = Table::read(&expected[0])?;
    let slowest: usize = summary
        .comment_value("slowest_run")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Input {
            path: expected[0].clone(),
            msg: "header lacks 'slowest_run = ...'".into(),
        })?;
    let tp = trace_path(outdir, slowest);
    if !tp.exists() {
        return Err(CliError::MissingInputs(vec![tp]));
    }
    let spectrum = read_spectrum(&expected[1])?;
    let traces = read_traces(&tp, &spectrum.values)?;
    let trace = traces.first().ok_or_else(|| CliError::Input {
        path: tp.clone(),
        msg: "no rows".into(),
    })?;
    let title = format!(
        "{}, {}",
        summary.comment_value("problem").unwrap_or("?"),
        precond_label(&summary)
    );

    let mut series = vec![];
    for i in 1..=trace.s {
        let mu = spectrum.values[i - 1];
        series.push(Series {
            label: format!("mu_{i} - theta_{i}"),
            color_index: i - 1,
            style: LineStyle::Solid,
            points: trace.steps.iter().map(|r| (r.step as f64, mu - r.theta[i - 1])).collect(),
        });
    }
    let bounds = Table::read(&expected[2])?;
    let origin: f64 = bounds.comment_value("origin_step").and_then(|v| v.parse().ok()).unwrap_or(0.0);
    let (ck, ci, cs, ce) = (bounds.col("kind")?, bounds.col("i")?, bounds.col("step")?, bounds.col("error_bound")?);
    let mut cur: Option<Series> = None;
    for r in 0..bounds.rows.len() {
        let kind: BoundKind = bounds.rows[r][ck]
            .parse()
            .map_err(|e: ritzlab::Error| CliError::Input { path: expected[2].clone(), msg: e.to_string() })?;
        if kind == BoundKind::Bpsde {
            // λ-errors do not share the axis
            continue;
        }
        let i: usize = bounds.parse(r, ci)?;
        let Some(step) = bounds.parse_opt::<f64>(r, cs)? else { continue };
        let e: f64 = bounds.parse(r, ce)?;
        let label = format!("{kind} i={i}");
        if cur.as_ref().is_none_or(|s| s.label != label) {
            series.extend(cur.take());
            cur = Some(Series {
                label,
                color_index: i - 1,
                style: if kind == BoundKind::Neighbor { LineStyle::Dotted } else { LineStyle::Dashed },
                points: vec![],
            });
        }
        cur.as_mut().unwrap().points.push((origin + step, e));
    }
    series.extend(cur);
    Ok((title, series))
}

fn precond_label(summary: &Table) -> String {
    let kind = summary.comment_value("precond.kind").unwrap_or("?");
    match kind {
        "perturbed-identity" => format!("perturbed identity, eta = {}", summary.comment_value("precond.eta").unwrap_or("?")),
        "ic" => format!("IC, droptol = {}", summary.comment_value("precond.droptol").unwrap_or("?")),
        other => other.to_string(),
    }
}

/// Writes `report.svg` into `outdir` (or to `out`).
pub fn cmd_report(outdir: &Path, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let (title, series) = collect_series(outdir)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| outdir.join("report.svg"));
    std::fs::write(&path, render_svg(&title, &series))?;
    Ok(path)
}
