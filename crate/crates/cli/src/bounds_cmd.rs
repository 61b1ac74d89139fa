use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ritzlab::analysis::{curve_for_trace, validate, validate_single_step, write_bound_csv, BoundCurve, BoundKind};
use ritzlab::eigsolve::IterTrace;
use ritzlab::oracle::Spectrum;

use crate::commands::trace_path;
use crate::config::ExperimentConfig;
use crate::csvio::{read_spectrum, read_traces, Table};
use crate::error::CliError;

/// Where the quality parameter of a curve comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QSource {
    /// Per-run maximum of the post-phase `γ̃` samples for the curve's `i`;
    /// `thm2e3` uses `γ`.
    GammaTilde,
    /// `γ` of the scaled preconditioner for every kind.
    Gamma,
    Value(f64),
}

impl FromStr for QSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gamma-tilde" => Ok(QSource::GammaTilde),
            "gamma" => Ok(QSource::Gamma),
            v => v
                .parse()
                .map(QSource::Value)
                .map_err(|_| format!("--q expects gamma-tilde, gamma or a number, got '{v}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Pass,
    Fail(usize),
    NotApplicable(String),
    Undefined(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveCheck {
    pub run_id: usize,
    pub kind: BoundKind,
    pub i: usize,
    pub q: Option<f64>,
    /// Step number (not index) at which the curve starts.
    pub origin_step: Option<usize>,
    pub checked: usize,
    pub status: Status,
    /// Backed by a theorem with the quality parameter used.
    pub gating: bool,
}

#[derive(Debug, Default)]
pub struct BoundsReport {
    pub checks: Vec<CurveCheck>,
    /// `(run_id, checked, violations)` of the single-step estimate.
    pub single_step: Vec<(usize, usize, usize)>,
}

impl BoundsReport {
    pub fn gating_failures(&self) -> usize {
        let curves = self.checks.iter().filter(|c| c.gating && matches!(c.status, Status::Fail(_))).count();
        curves + self.single_step.iter().filter(|s| s.2 > 0).count()
    }
}

struct Inputs {
    cfg: ExperimentConfig,
    gamma: f64,
    spectrum: Spectrum,
    traces: Vec<IterTrace>,
    slowest: usize,
}

fn load(outdir: &Path) -> Result<Inputs, CliError> {
    let expected = [outdir.join("summary.csv"), outdir.join("spectrum.csv")];
    let missing: Vec<_> = expected.iter().filter(|p| !p.exists()).cloned().collect();
    if !missing.is_empty() {
        return Err(CliError::MissingInputs(missing));
    }
    let summary = Table::read(&expected[0])?;
    let cfg = ExperimentConfig::from_echo(&summary.comments)?;
    let gamma: f64 = summary
        .comment_value("gamma")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Input {
            path: expected[0].clone(),
            msg: "header lacks 'gamma = ...'".into(),
        })?;
    let slowest_id: usize = summary
        .comment_value("slowest_run")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Input {
            path: expected[0].clone(),
            msg: "header lacks 'slowest_run = ...'".into(),
        })?;
    let spectrum = read_spectrum(&expected[1])?;
    let crun = summary.col("run_id")?;
    let ids: Vec<usize> = (0..summary.rows.len()).map(|r| summary.parse(r, crun)).collect::<Result<_, _>>()?;
    let missing: Vec<_> = ids.iter().map(|&k| trace_path(outdir, k)).filter(|p| !p.exists()).collect();
    if !missing.is_empty() {
        return Err(CliError::MissingInputs(missing));
    }
    let mu: Vec<f64> = spectrum.values.iter().take(cfg.s).cloned().collect();
    let mut traces = vec![];
    for &k in &ids {
        traces.extend(read_traces(&trace_path(outdir, k), &mu)?);
    }
    let slowest = traces.iter().position(|t| t.run_id == slowest_id).ok_or_else(|| CliError::Input {
        path: expected[0].clone(),
        msg: format!("slowest run {slowest_id} has no trace"),
    })?;
    Ok(Inputs {
        cfg,
        gamma,
        spectrum,
        traces,
        slowest,
    })
}

fn quality_for(kind: BoundKind, i: usize, trace: &IterTrace, gamma: f64, src: QSource) -> (Option<f64>, bool) {
    if !kind.uses_quality() {
        return (Some(0.0), true);
    }
    match src {
        QSource::Value(v) => (Some(v), false),
        QSource::Gamma => (Some(gamma), kind == BoundKind::Thm2e3 || i == trace.s),
        QSource::GammaTilde if kind == BoundKind::Thm2e3 => (Some(gamma), true),
        QSource::GammaTilde => (trace.max_gamma_tilde(i), true),
    }
}

fn check_curve(
    trace: &IterTrace,
    spectrum: &Spectrum,
    kind: BoundKind,
    i: usize,
    q: Option<f64>,
    gating: bool,
) -> Result<(CurveCheck, Option<(usize, BoundCurve)>), CliError> {
    let s = trace.s;
    let mut check = CurveCheck {
        run_id: trace.run_id,
        kind,
        i,
        q,
        origin_step: None,
        checked: 0,
        status: Status::Pass,
        gating: gating && kind.guaranteed(),
    };
    let Some(qv) = q.filter(|q| (0.0..1.0).contains(q)) else {
        check.status = Status::NotApplicable(match q {
            None => "no quality sample".into(),
            Some(v) => format!("quality parameter {v} not below 1"),
        });
        return Ok((check, None));
    };
    let Some((origin, curve)) = curve_for_trace(trace, spectrum, kind, i, s, qv)? else {
        check.status = Status::NotApplicable("phase not entered".into());
        return Ok((check, None));
    };
    check.origin_step = Some(trace.steps[origin].step);
    if let Some(why) = &curve.undefined {
        check.status = Status::Undefined(why.clone());
        return Ok((check, Some((origin, curve))));
    }
    let report = validate(trace, origin, &curve)?;
    check.checked = report.checked;
    if !report.passed() {
        check.status = Status::Fail(report.violations.len());
    }
    Ok((check, Some((origin, curve))))
}

/// Evaluates the configured bound kinds on every trace in `outdir`.
///
/// Writes `validation.csv`, `violations.csv` and `bounds.csv` (curves of the
/// slowest run) and returns the report.
pub fn cmd_bounds(outdir: &Path, src: QSource) -> Result<BoundsReport, CliError> {
    let inp = load(outdir)?;
    let tracked = inp.cfg.tracked();
    let mut report = BoundsReport::default();
    let mut violations = vec![];
    let mut slow_curves = vec![];
    let mut slow_origin = None;
    for (k, trace) in inp.traces.iter().enumerate() {
        for &kind in &inp.cfg.bounds {
            for &i in &tracked {
                if kind == BoundKind::Thm2e3 && i != trace.s {
                    continue;
                }
                let (q, gating) = quality_for(kind, i, trace, inp.gamma, src);
                let (check, curve) = check_curve(trace, &inp.spectrum, kind, i, q, gating)?;
                if let (Some((origin, c)), Status::Fail(_)) = (&curve, &check.status) {
                    for v in validate(trace, *origin, c)?.violations {
                        violations.push((trace.run_id, kind, v));
                    }
                }
                if k == inp.slowest {
                    if let Some((origin, c)) = curve {
                        slow_origin = Some(trace.steps[origin].step);
                        slow_curves.push(c);
                    }
                }
                report.checks.push(check);
            }
        }
        if inp.cfg.bounds.contains(&BoundKind::Thm2e3) {
            let q = match src {
                QSource::Value(v) => v,
                _ => inp.gamma,
            };
            let r = validate_single_step(trace, &inp.spectrum.values, inp.spectrum.mu_min, q);
            report.single_step.push((trace.run_id, r.checked, r.violations.len()));
        }
    }

    let mut header = inp.cfg.echo();
    header.push(format!("q_source = {}", match src {
        QSource::GammaTilde => "gamma-tilde".to_string(),
        QSource::Gamma => "gamma".to_string(),
        QSource::Value(v) => v.to_string(),
    }));
    let mut w = BufWriter::new(File::create(outdir.join("validation.csv"))?);
    for line in &header {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "run_id,kind,i,q,origin_step,checked,status,violations,gating")?;
    for c in &report.checks {
        let (status, nv) = match &c.status {
            Status::Pass => ("pass".to_string(), 0),
            Status::Fail(n) => ("fail".to_string(), *n),
            Status::NotApplicable(w) => (format!("n/a: {w}"), 0),
            Status::Undefined(w) => (format!("undefined: {w}"), 0),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            c.run_id,
            c.kind,
            c.i,
            c.q.map(|q| format!("{q:.10e}")).unwrap_or_default(),
            c.origin_step.map(|s| s.to_string()).unwrap_or_default(),
            c.checked,
            status.replace(',', ";"),
            nv,
            c.gating
        )?;
    }
    for (run, checked, nv) in &report.single_step {
        writeln!(
            w,
            "{run},thm2e3-single-step,{},{:.10e},,{checked},{},{nv},true",
            inp.cfg.s,
            match src {
                QSource::Value(v) => v,
                _ => inp.gamma,
            },
            if *nv == 0 { "pass" } else { "fail" }
        )?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(outdir.join("violations.csv"))?);
    for line in &header {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "run_id,kind,i,ell,observed,bound")?;
    for (run, kind, v) in &violations {
        writeln!(w, "{run},{kind},{},{},{:.10e},{:.10e}", v.i, v.ell, v.observed, v.bound)?;
    }
    w.flush()?;

    let mut h = header.clone();
    h.push(format!("run_id = {}", inp.traces[inp.slowest].run_id));
    h.push(format!("origin_step = {}", slow_origin.map(|s| s.to_string()).unwrap_or_default()));
    write_bound_csv(&slow_curves, &h, BufWriter::new(File::create(outdir.join("bounds.csv"))?))?;
    Ok(report)
}

/// One line per (kind, i) aggregated over runs.
pub fn summarize(report: &BoundsReport) -> Vec<String> {
    let mut keys: Vec<(BoundKind, usize)> = report.checks.iter().map(|c| (c.kind, c.i)).collect();
    keys.sort();
    keys.dedup();
    let mut out = vec![];
    for (kind, i) in keys {
        let group: Vec<&CurveCheck> = report.checks.iter().filter(|c| c.kind == kind && c.i == i).collect();
        let pass = group.iter().filter(|c| c.status == Status::Pass).count();
        let fail = group.iter().filter(|c| matches!(c.status, Status::Fail(_))).count();
        let na = group.len() - pass - fail;
        let gating = if group.iter().all(|c| c.gating) { "" } else { " (not gating)" };
        out.push(format!("{kind} i={i}: {pass} pass, {fail} fail, {na} n/a{gating}"));
    }
    if !report.single_step.is_empty() {
        let checked: usize = report.single_step.iter().map(|s| s.1).sum();
        let bad: usize = report.single_step.iter().map(|s| s.2).sum();
        out.push(format!("thm2e3 single-step: {checked} steps checked, {bad} violations"));
    }
    out
}
