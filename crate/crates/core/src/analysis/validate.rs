use super::bounds::{bound_curve, conv_factor, distance_ratio, ratio_to_error, BoundCurve, BoundKind};
use crate::eigsolve::IterTrace;
use crate::error::{Error, Result};
use crate::oracle::Spectrum;

/// Absolute slack on ratio comparisons.
pub const RATIO_TOL: f64 = 1e-9;
/// Distance to the reference eigenvalue below which errors are compared
/// instead of ratios; also the slack on that comparison.
pub const ERROR_TOL: f64 = 1e-12;

/// Index into `trace.steps` where a curve of `kind` starts: the first
/// record with `θ_s > μ_{j+1}` (`j = s` for final-phase kinds). For `j > s`
/// the record must also satisfy `θ_s ≤ μ_j`, otherwise `None`.
pub fn curve_origin(trace: &IterTrace, spectrum: &Spectrum, kind: BoundKind, j: usize) -> Result<Option<usize>> {
    let s = trace.s;
    let j = if kind.general_j() { j } else { s };
    let low = spectrum.mu(j + 1)?;
    let Some(k) = trace.steps.iter().position(|r| r.theta.len() == s && r.theta[s - 1] > low) else {
        return Ok(None);
    };
    if j > s && trace.steps[k].theta[s - 1] > spectrum.mu(j)? {
        return Ok(None);
    }
    Ok(Some(k))
}

/// Bound curve for Ritz index `i` drawn from this trace's origin over the
/// remaining recorded steps; `None` when the origin is never reached.
pub fn curve_for_trace(
    trace: &IterTrace,
    spectrum: &Spectrum,
    kind: BoundKind,
    i: usize,
    j: usize,
    q: f64,
) -> Result<Option<(usize, BoundCurve)>> {
    let Some(origin) = curve_origin(trace, spectrum, kind, j)? else {
        return Ok(None);
    };
    let theta0 = trace.steps[origin].theta[trace.s - 1];
    let steps = trace.steps.len() - 1 - origin;
    let curve = bound_curve(kind, spectrum, i, j, trace.s, q, theta0, steps)?;
    Ok(Some((origin, curve)))
}

/// A step where the observed quantity exceeds the bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub i: usize,
    /// Steps since the origin.
    pub ell: usize,
    pub observed: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub kind: BoundKind,
    pub i: usize,
    /// Index into `trace.steps` where the comparison starts.
    pub origin: usize,
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// `(i, ℓ)` of every violation.
    pub fn violation_points(&self) -> Vec<(usize, usize)> {
        self.violations.iter().map(|v| (v.i, v.ell)).collect()
    }
}

/// Compares the trace against `curve` from `origin` on.
///
/// Ratios are compared with an absolute slack of [`RATIO_TOL`]; once `θ_i`
/// is within [`ERROR_TOL`] of the reference value the error `μ_ref − θ_i`
/// is compared with the error bound instead. Undefined curves pass vacuously.
pub fn validate(trace: &IterTrace, origin: usize, curve: &BoundCurve) -> Result<ValidationReport> {
    let i = curve.i;
    if i == 0 || i > trace.s {
        return Err(Error::Parameter(format!("Ritz index {i} outside 1..={}", trace.s)));
    }
    let mut report = ValidationReport {
        kind: curve.kind,
        i,
        origin,
        checked: 0,
        violations: vec![],
    };
    if !curve.is_defined() {
        return Ok(report);
    }
    for (ell, rec) in trace.steps.iter().skip(origin).enumerate() {
        let Some((&rb, &eb)) = curve.ratio_bounds.get(ell).zip(curve.error_bounds.get(ell)) else {
            break;
        };
        let theta = rec.theta[i - 1];
        let err = curve.observed_error(theta);
        report.checked += 1;
        if err.abs() <= ERROR_TOL {
            if err > eb + ERROR_TOL {
                report.violations.push(Violation { i, ell, observed: err, bound: eb });
            }
        } else {
            let r = curve.observed_ratio(theta);
            if r > rb + RATIO_TOL {
                report.violations.push(Violation { i, ell, observed: r, bound: rb });
            }
        }
    }
    Ok(report)
}

/// Outcome of checking the single-step estimate along a trace.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SingleStepReport {
    pub checked: usize,
    /// Steps where `θ_s` lay in no interval `(μ_{j+1}, μ_j)` covered by the
    /// known eigenvalues.
    pub skipped: usize,
    /// `(step, observed, bound)` where `step` is the later record's step.
    pub violations: Vec<(usize, f64, f64)>,
}

/// Checks `(μ_j − θ_s')/(θ_s' − μ_{j+1}) ≤ f² (μ_j − θ_s)/(θ_s − μ_{j+1})`
/// for every pair of consecutive records with `θ_s ∈ (μ_{j+1}, μ_j)`, `j ≥ s`,
/// where `f = conv_factor(κ, q)` and `κ = (μ_{j+1} − μ_n)/(μ_j − μ_n)`.
///
/// `mu` holds leading eigenvalues in descending order.
pub fn validate_single_step(trace: &IterTrace, mu: &[f64], mu_n: f64, q: f64) -> SingleStepReport {
    let s = trace.s;
    let mut out = SingleStepReport::default();
    for w in trace.steps.windows(2) {
        let (th, th1) = (w[0].theta[s - 1], w[1].theta[s - 1]);
        // 1-based j with μ_{j+1} < θ < μ_j
        let j = (s..mu.len()).find(|&j| mu[j] < th && th < mu[j - 1]);
        let Some(j) = j else {
            out.skipped += 1;
            continue;
        };
        let (mj, mj1) = (mu[j - 1], mu[j]);
        let kappa = (mj1 - mu_n) / (mj - mu_n);
        let f = conv_factor(kappa, q);
        let bound = f * f * distance_ratio(th, mj, mj1);
        out.checked += 1;
        let err = mj - th1;
        if err.abs() <= ERROR_TOL {
            let eb = ratio_to_error(bound, mj, mj1);
            if err > eb + ERROR_TOL {
                out.violations.push((w[1].step, err, eb));
            }
        } else {
            let r = distance_ratio(th1, mj, mj1);
            if r > bound + RATIO_TOL {
                out.violations.push((w[1].step, r, bound));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigsolve::{AuxFields, StepRecord};

    fn spectrum() -> Spectrum {
        Spectrum {
            values: vec![4.0, 3.0, 2.0, 1.5],
            vectors: None,
            residuals: vec![],
            n: 20,
            mu_min: 1.0,
        }
    }

    fn trace(thetas: &[[f64; 2]]) -> IterTrace {
        IterTrace {
            run_id: 0,
            seed: 0,
            s: 2,
            steps: thetas
                .iter()
                .enumerate()
                .map(|(k, t)| StepRecord {
                    step: k,
                    theta: t.to_vec(),
                    resnorm: vec![0.0; 2],
                    phase: Some(t[1] > 2.0),
                    aux: Vec::<AuxFields>::new(),
                })
                .collect(),
            complete: true,
            converged: false,
            error: None,
            reference: Some(vec![4.0, 3.0, 2.0]),
            config: vec![],
        }
    }

    /// Trace following the `lm2e1` bound for both Ritz values exactly.
    fn on_bound(sp: &Spectrum) -> Vec<[f64; 2]> {
        let mut out = vec![[3.5, 1.8]];
        let c1 = bound_curve(BoundKind::Lm2e1, sp, 1, 2, 2, 0.0, 2.4, 6).unwrap();
        let c2 = bound_curve(BoundKind::Lm2e1, sp, 2, 2, 2, 0.0, 2.4, 6).unwrap();
        for l in 0..=6 {
            out.push([4.0 - c1.error_bounds[l], 3.0 - c2.error_bounds[l]]);
        }
        out
    }

    #[test]
    fn origin_is_phase_entry() {
        let sp = spectrum();
        let t = trace(&on_bound(&sp));
        assert_eq!(curve_origin(&t, &sp, BoundKind::Thm2e1, 2).unwrap(), Some(1));
        let (o, c) = curve_for_trace(&t, &sp, BoundKind::Lm2e1, 1, 2, 0.0).unwrap().unwrap();
        assert_eq!(o, 1);
        assert_eq!(c.ratio_bounds.len(), 7);
        // θ_s⁽⁰⁾ = 1.8 lies in (μ_4, μ_3]
        assert_eq!(curve_origin(&t, &sp, BoundKind::Thm2e2, 3).unwrap(), Some(0));
        let never = trace(&[[3.0, 1.6], [3.1, 1.7]]);
        assert_eq!(curve_origin(&never, &sp, BoundKind::Thm2e1, 2).unwrap(), None);
    }

    #[test]
    fn trace_on_the_bound_passes() {
        let sp = spectrum();
        let t = trace(&on_bound(&sp));
        for i in 1..=2 {
            let (o, c) = curve_for_trace(&t, &sp, BoundKind::Lm2e1, i, 2, 0.0).unwrap().unwrap();
            let r = validate(&t, o, &c).unwrap();
            assert!(r.passed(), "{r:?}");
            assert_eq!(r.checked, 7);
        }
    }

    #[test]
    fn injected_violation_is_reported() {
        let sp = spectrum();
        let mut th = on_bound(&sp);
        th[4][0] -= 1e-3;
        th[6][1] -= 1e-3;
        let t = trace(&th);
        let (o, c) = curve_for_trace(&t, &sp, BoundKind::Lm2e1, 1, 2, 0.0).unwrap().unwrap();
        assert_eq!(validate(&t, o, &c).unwrap().violation_points(), vec![(1, 3)]);
        let (o, c) = curve_for_trace(&t, &sp, BoundKind::Lm2e1, 2, 2, 0.0).unwrap().unwrap();
        assert_eq!(validate(&t, o, &c).unwrap().violation_points(), vec![(2, 5)]);
    }

    #[test]
    fn converged_values_use_error_comparison() {
        let sp = spectrum();
        let t = trace(&[[3.9, 2.5], [4.0 - 1e-13, 3.0 - 5e-13], [4.0, 3.0]]);
        let (o, c) = curve_for_trace(&t, &sp, BoundKind::Lm2e1, 1, 2, 0.0).unwrap().unwrap();
        assert!(validate(&t, o, &c).unwrap().passed());
    }

    #[test]
    fn single_step_check() {
        let sp = spectrum();
        let mu = &sp.values;
        // θ_s in (μ_4, μ_3) = (1.5, 2): κ = 0.5/1, f = 1/3
        let t = trace(&[[3.5, 1.6], [3.6, 1.95], [3.7, 2.5], [3.8, 2.9]]);
        let r = validate_single_step(&t, mu, sp.mu_min, 0.0);
        assert_eq!(r.checked, 3);
        assert!(r.violations.is_empty(), "{r:?}");
        // ratio 0.4/0.1 = 4 → bound 4/9; step to 1.7 has ratio 0.3/0.2 = 1.5
        let bad = trace(&[[3.5, 1.6], [3.6, 1.7]]);
        let r = validate_single_step(&bad, mu, sp.mu_min, 0.0);
        assert_eq!(r.violations.len(), 1);
        assert!((r.violations[0].2 - 4.0 / 9.0).abs() < 1e-14);
        // θ_s below every known interval is skipped
        let low = trace(&[[3.5, 1.2], [3.6, 1.3]]);
        assert_eq!(validate_single_step(&low, mu, sp.mu_min, 0.0).skipped, 1);
    }
}
