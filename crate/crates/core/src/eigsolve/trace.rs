use std::io::Write;

use crate::error::Result;
use crate::oracle::Orientation;

/// Per-step quantities reported by an observer running alongside the solver.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AuxFields {
    pub gamma_tilde: Option<f64>,
    pub dim_tilde: Option<usize>,
    pub dim_hat: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// `θ₁ ≥ … ≥ θ_s`.
    pub theta: Vec<f64>,
    pub resnorm: Vec<f64>,
    /// `θ_s > μ_{s+1}`, when a reference spectrum was given.
    pub phase: Option<bool>,
    /// Indexed by `i − 1`; empty when no observer reported anything.
    pub aux: Vec<AuxFields>,
}

impl StepRecord {
    /// Auxiliary fields for the 1-based Ritz index `i`.
    pub fn aux_for(&self, i: usize) -> AuxFields {
        self.aux.get(i - 1).copied().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterTrace {
    pub run_id: usize,
    pub seed: u64,
    pub s: usize,
    pub steps: Vec<StepRecord>,
    /// False when a step failed; `error` then carries the message.
    pub complete: bool,
    pub converged: bool,
    pub error: Option<String>,
    /// Leading reference eigenvalues `μ₁ ≥ μ₂ ≥ …`, used for errors and phase.
    pub reference: Option<Vec<f64>>,
    /// `key = value` pairs echoed into CSV headers.
    pub config: Vec<(String, String)>,
}

impl IterTrace {
    /// Index into `steps` of the first record with `θ_s > μ_{s+1}`.
    pub fn phase_entry(&self) -> Option<usize> {
        self.steps.iter().position(|r| r.phase == Some(true))
    }

    /// `θ_i^{(ℓ)}` with 1-based `i`.
    pub fn theta(&self, step: usize, i: usize) -> f64 {
        self.steps[step].theta[i - 1]
    }

    /// `(i, ℓ+1)` pairs where `θ_i^{(ℓ+1)} < θ_i^{(ℓ)} − 1e-12·|θ_i^{(ℓ)}|`.
    pub fn monotonicity_violations(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for w in self.steps.windows(2) {
            for (i, (a, b)) in w[0].theta.iter().zip(&w[1].theta).enumerate() {
                if *b < a - 1e-12 * a.abs() {
                    out.push((i + 1, w[1].step));
                }
            }
        }
        out
    }

    /// Largest post-phase `γ̃` sample for Ritz index `i`.
    pub fn max_gamma_tilde(&self, i: usize) -> Option<f64> {
        let start = self.phase_entry()?;
        self.steps[start..]
            .iter()
            .filter_map(|r| r.aux_for(i).gamma_tilde)
            .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.max(g))))
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.steps.last()
    }
}

const CSV_COLUMNS: &str = "run_id,step,i,theta,err,resnorm,phase,gamma_tilde,dim_tilde,dim_hat";

/// Writes traces as CSV, one row per `(run, step, i)`.
///
/// `header` lines are written first, prefixed with `# `. With
/// `SmallestLambda` the `theta` column holds `ϑ_i = 1/θ_i` and `err` holds
/// `ϑ_i − λ_i`; otherwise `err = μ_i − θ_i`.
pub fn write_trace_csv(traces: &[IterTrace], header: &[String], orientation: Orientation, mut w: impl Write) -> Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "{CSV_COLUMNS}")?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for t in traces {
        for r in &t.steps {
            for (k, &theta) in r.theta.iter().enumerate() {
                let aux = r.aux_for(k + 1);
                let mu = t.reference.as_ref().and_then(|m| m.get(k).copied());
                let (value, err) = match orientation {
                    Orientation::LargestMu => (theta, mu.map(|m| m - theta)),
                    Orientation::SmallestLambda => (1.0 / theta, mu.map(|m| 1.0 / theta - 1.0 / m)),
                };
                writeln!(
                    w,
                    "{},{},{},{:.17e},{},{:e},{},{},{},{}",
                    t.run_id,
                    r.step,
                    k + 1,
                    value,
                    opt(err.map(|e| format!("{e:.6e}"))),
                    r.resnorm[k],
                    opt(r.phase.map(|p| (p as u8).to_string())),
                    opt(aux.gamma_tilde.map(|g| format!("{g:.10e}"))),
                    opt(aux.dim_tilde.map(|d| d.to_string())),
                    opt(aux.dim_hat.map(|d| d.to_string())),
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
