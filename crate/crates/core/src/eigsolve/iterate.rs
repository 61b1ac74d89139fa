use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ritz::{rayleigh_ritz, Pencil, RitzSet};
use super::trace::{AuxFields, IterTrace, StepRecord};
use crate::error::{Error, Result};
use crate::oracle::Spectrum;
use crate::precond::Preconditioner;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// `span{V, T R_V}`.
    #[default]
    Bpg,
    /// `span{X − T R}` without the current block.
    Pinvit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub s: usize,
    pub max_steps: usize,
    /// Stop once every residual norm is at most `tol · |θ_i|`.
    pub tol: f64,
    pub seed: u64,
    pub method: Method,
    pub run_id: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            s: 1,
            max_steps: 200,
            tol: 1e-10,
            seed: 0,
            method: Method::Bpg,
            run_id: 0,
        }
    }
}

/// Receives every recorded iterate (step 0 included) and may attach
/// auxiliary quantities to its record.
pub trait StepObserver {
    fn observe(&mut self, step: usize, ritz: &RitzSet) -> Vec<AuxFields>;
}

/// Gaussian `n × s` block from a seeded ChaCha8 stream, followed by RR.
pub fn initial_block(pencil: &Pencil, s: usize, seed: u64) -> Result<RitzSet> {
    let n = pencil.n();
    if s == 0 || s >= n {
        return Err(Error::Parameter(format!("block size must satisfy 1 <= s < n = {n}, got {s}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, s, |_, _| StandardNormal.sample(&mut rng));
    rayleigh_ritz(&x, pencil, s)
}

fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// One BPG step: `RR[M, A, s]` on `span{V, T R_V}`.
pub fn bpg_step(cur: &RitzSet, pencil: &Pencil, t: &Preconditioner) -> Result<RitzSet> {
    let tr = t.apply(&cur.residual)?;
    rayleigh_ritz(&hcat(cur.v(), &tr), pencil, cur.s())
}

/// One block PINVIT step: `RR` on `span{X − T (A X − M X Λ)}` with the
/// Rayleigh quotients `λ_j = 1/θ_j`.
///
/// Per column `A x − λ M x = −R_V e_j / θ_j`, so the update is
/// `x_j + T r_j / θ_j`.
pub fn pinvit_block_step(cur: &RitzSet, pencil: &Pencil, t: &Preconditioner) -> Result<RitzSet> {
    if cur.values.iter().any(|&th| !(th > 0.0)) {
        return Err(Error::Precondition("PINVIT needs positive Ritz values θ = 1/λ".into()));
    }
    let mut scaled = cur.residual.clone();
    for (j, th) in cur.values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / th);
    }
    let x = cur.v() + t.apply(&scaled)?;
    rayleigh_ritz(&x, pencil, cur.s())
}

pub fn is_converged(r: &RitzSet, tol: f64) -> bool {
    r.residual_norms.iter().zip(&r.values).all(|(n, th)| *n <= tol * th.abs())
}

fn record(step: usize, r: &RitzSet, reference: Option<&[f64]>) -> StepRecord {
    let s = r.s();
    StepRecord {
        step,
        theta: r.values.clone(),
        resnorm: r.residual_norms.clone(),
        phase: reference.and_then(|mu| mu.get(s).map(|m| r.values[s - 1] > *m)),
        aux: vec![],
    }
}

struct NoObserver;

impl StepObserver for NoObserver {
    fn observe(&mut self, _: usize, _: &RitzSet) -> Vec<AuxFields> {
        vec![]
    }
}

/// Runs the iteration from a seeded initial block and records every step.
pub fn run_iteration(pencil: &Pencil, t: &Preconditioner, cfg: &RunConfig, reference: Option<&Spectrum>) -> Result<IterTrace> {
    run_iteration_observed(pencil, t, cfg, reference, &mut NoObserver)
}

/// As [`run_iteration`], calling `observer` on every iterate.
///
/// A failing step ends the run; the trace keeps the steps recorded so far,
/// with `complete = false` and the error message.
pub fn run_iteration_observed(
    pencil: &Pencil,
    t: &Preconditioner,
    cfg: &RunConfig,
    reference: Option<&Spectrum>,
    observer: &mut dyn StepObserver,
) -> Result<IterTrace> {
    if t.n() != pencil.n() {
        return Err(Error::dims("run_iteration (preconditioner)", pencil.n(), t.n()));
    }
    let mu_ref = reference.map(|sp| sp.values.clone());
    let mut cur = initial_block(pencil, cfg.s, cfg.seed)?;
    let mut trace = IterTrace {
        run_id: cfg.run_id,
        seed: cfg.seed,
        s: cfg.s,
        steps: Vec::with_capacity(cfg.max_steps + 1),
        complete: true,
        converged: false,
        error: None,
        reference: mu_ref.clone(),
        config: vec![],
    };
    let mut rec = record(0, &cur, mu_ref.as_deref());
    rec.aux = observer.observe(0, &cur);
    trace.steps.push(rec);
    for step in 1..=cfg.max_steps {
        if is_converged(&cur, cfg.tol) {
            trace.converged = true;
            break;
        }
        let next = match cfg.method {
            Method::Bpg => bpg_step(&cur, pencil, t),
            Method::Pinvit => pinvit_block_step(&cur, pencil, t),
        };
        match next {
            Ok(n) => cur = n,
            Err(e) => {
                trace.complete = false;
                trace.error = Some(format!("step {step}: {e}"));
                return Ok(trace);
            }
        }
        let mut rec = record(step, &cur, mu_ref.as_deref());
        rec.aux = observer.observe(step, &cur);
        trace.steps.push(rec);
    }
    if !trace.converged && is_converged(&cur, cfg.tol) {
        trace.converged = true;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixkit::SymOperator;
    use crate::oracle::reference_spectrum;
    use crate::precond::{make_exact_inverse, make_identity, make_perturbed_identity};
    use crate::problems::{ProblemKind, ProblemSpec};
    use nalgebra::DVector;

    fn diag_pencil(d: &[f64]) -> Pencil {
        Pencil::new(SymOperator::diagonal(DVector::from_column_slice(d)), SymOperator::identity(d.len())).unwrap()
    }

    #[test]
    fn four_by_four_bpg_step_matches_two_by_two_oracle() {
        let p = diag_pencil(&[4.0, 3.0, 2.0, 1.0]);
        let v = DMatrix::from_element(4, 1, 0.5);
        let cur = rayleigh_ritz(&v, &p, 1).unwrap();
        assert!((cur.values[0] - 2.5).abs() < 1e-15);
        let next = bpg_step(&cur, &p, &make_identity(4)).unwrap();
        // span{v, Mv}: S = [[2.5, 7.5], [7.5, 25]], G = [[1, 2.5], [2.5, 7.5]];
        // det(S − θG) = 1.25 θ² − 6.25 θ + 6.25 = 0
        let (a, b, c): (f64, f64, f64) = (1.0 * 7.5 - 2.5 * 2.5, -(2.5 * 7.5 + 25.0 * 1.0 - 2.0 * 7.5 * 2.5), 2.5 * 25.0 - 7.5 * 7.5);
        let top = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        assert!((next.values[0] - top).abs() < 1e-13, "{} vs {top}", next.values[0]);
    }

    #[test]
    fn invariant_block_is_stationary() {
        let p = diag_pencil(&[5.0, 4.0, 3.0, 2.0, 1.0]);
        let x = DMatrix::from_fn(5, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let cur = rayleigh_ritz(&x, &p, 2).unwrap();
        let t = make_perturbed_identity(5, 0.05, Some(0.4), 3).unwrap();
        let next = bpg_step(&cur, &p, &t).unwrap();
        assert_eq!(next.values, cur.values);
        assert!(next.residual_norms.iter().all(|&r| r <= 1e-10));
    }

    #[test]
    fn exact_inverse_trial_space() {
        // with T = A⁻¹ the trial space equals span{V, A⁻¹MV}
        let problem = ProblemSpec::new(ProblemKind::LapRect {
            nx: 7,
            ny: 6,
            hx: 1.0,
            hy: 1.0,
        })
        .build()
        .unwrap();
        let p = Pencil::from_problem(&problem).unwrap();
        let t = make_exact_inverse(p.a()).unwrap();
        let cur = initial_block(&p, 2, 9).unwrap();
        let next = bpg_step(&cur, &p, &t).unwrap();
        let trial = {
            let h = p.solve_a(&cur.mv).unwrap();
            hcat(cur.v(), &h)
        };
        let direct = rayleigh_ritz(&trial, &p, 2).unwrap();
        for k in 0..2 {
            assert!((next.values[k] - direct.values[k]).abs() < 1e-12 * direct.values[k]);
        }
    }

    #[test]
    fn pinvit_with_exact_inverse_is_inverse_iteration() {
        // (I, A) with A = diag(1, 2, 10); x = (1, 0, 1)/√2
        let a = SymOperator::diagonal(DVector::from_vec(vec![1.0, 2.0, 10.0]));
        let p = Pencil::new(SymOperator::identity(3), a.clone()).unwrap();
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 1.0]) / 2f64.sqrt();
        let cur = rayleigh_ritz(&x, &p, 1).unwrap();
        assert!((1.0 / cur.values[0] - 5.5).abs() < 1e-14);
        let next = pinvit_block_step(&cur, &p, &make_exact_inverse(&a).unwrap()).unwrap();
        // A⁻¹x ∝ (1, 0, 0.1); λ = (1 + 10·0.01)/(1 + 0.01)
        assert!((1.0 / next.values[0] - 1.1 / 1.01).abs() < 1e-14);
        let v = next.v().column(0);
        assert!((v[2] / v[0] - 0.1).abs() < 1e-14 && v[1].abs() < 1e-15);
        let bpg = bpg_step(&cur, &p, &make_exact_inverse(&a).unwrap()).unwrap();
        assert!(bpg.values[0] >= next.values[0] - 1e-15);
    }

    #[test]
    fn bpg_dominates_pinvit_on_same_input() {
        let problem = ProblemSpec::new(ProblemKind::DiagCluster { n: 60 }).build().unwrap();
        let p = Pencil::from_problem(&problem).unwrap();
        let t = make_perturbed_identity(60, 0.05, None, 2).unwrap();
        let mut cur = initial_block(&p, 3, 4).unwrap();
        for _ in 0..5 {
            let a = bpg_step(&cur, &p, &t).unwrap();
            let b = pinvit_block_step(&cur, &p, &t).unwrap();
            for k in 0..3 {
                assert!(a.values[k] >= b.values[k] - 1e-12 * b.values[k]);
            }
            cur = b;
        }
    }

    #[test]
    fn zero_steps_and_determinism() {
        let problem = ProblemSpec::new(ProblemKind::DiagCluster { n: 50 }).build().unwrap();
        let p = Pencil::from_problem(&problem).unwrap();
        let t = make_identity(50);
        let cfg = RunConfig {
            s: 3,
            max_steps: 0,
            seed: 11,
            ..Default::default()
        };
        let tr = run_iteration(&p, &t, &cfg, None).unwrap();
        assert_eq!(tr.steps.len(), 1);
        let cfg = RunConfig { max_steps: 15, ..cfg };
        let a = run_iteration(&p, &t, &cfg, None).unwrap();
        let b = run_iteration(&p, &t, &cfg, None).unwrap();
        assert_eq!(a, b);
        assert!(a.monotonicity_violations().is_empty());
    }

    #[test]
    fn example_one_exact_inverse_enters_phase() {
        let problem = ProblemSpec::new(ProblemKind::DiagCluster { n: 200 }).build().unwrap();
        let p = Pencil::from_problem(&problem).unwrap();
        let spec = reference_spectrum(&problem, 8).unwrap();
        let t = make_exact_inverse(p.a()).unwrap();
        let cfg = RunConfig {
            s: 6,
            max_steps: 60,
            seed: 1,
            ..Default::default()
        };
        let tr = run_iteration(&p, &t, &cfg, Some(&spec)).unwrap();
        assert!(tr.complete);
        assert!(tr.monotonicity_violations().is_empty());
        assert!(tr.phase_entry().is_some());
    }

    #[test]
    fn shift_invariance() {
        let problem = ProblemSpec::new(ProblemKind::DiagCluster { n: 80 }).build().unwrap();
        let p = Pencil::from_problem(&problem).unwrap();
        let sigma = 0.5;
        let ps = p.shifted(sigma).unwrap();
        let t = make_perturbed_identity(80, 0.05, None, 5).unwrap();
        let cfg = RunConfig {
            s: 4,
            max_steps: 12,
            seed: 21,
            tol: 0.0,
            ..Default::default()
        };
        let a = run_iteration(&p, &t, &cfg, None).unwrap();
        let b = run_iteration(&ps, &t, &cfg, None).unwrap();
        assert_eq!(a.steps.len(), b.steps.len());
        for (ra, rb) in a.steps.iter().zip(&b.steps) {
            for (x, y) in ra.theta.iter().zip(&rb.theta) {
                assert!(((x - sigma) - y).abs() <= 1e-9 * y.abs(), "{x} {y}");
            }
        }
    }

    #[test]
    fn eigenvector_start_stays_exact() {
        let p = diag_pencil(&[6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        let x = DMatrix::from_fn(6, 2, |i, j| if i == j + 1 { 1.0 } else { 0.0 });
        let mut cur = rayleigh_ritz(&x, &p, 2).unwrap();
        let t = make_perturbed_identity(6, 0.05, Some(0.3), 8).unwrap();
        for _ in 0..5 {
            cur = bpg_step(&cur, &p, &t).unwrap();
            assert!(cur.residual_norms.iter().all(|&r| r <= 1e-10));
            assert_eq!(cur.values, vec![5.0, 4.0]);
        }
    }

    #[test]
    fn failing_step_keeps_partial_trace() {
        let p = diag_pencil(&[3.0, 2.0, 1.0, 0.5]);
        assert!(run_iteration(&p, &make_identity(3), &RunConfig::default(), None).is_err());
        // PINVIT needs θ > 0; a negative definite M fails at the first step
        let neg = diag_pencil(&[-1.0, -2.0, -3.0, -4.0]);
        let cfg = RunConfig {
            s: 2,
            max_steps: 5,
            method: Method::Pinvit,
            ..Default::default()
        };
        let tr = run_iteration(&neg, &make_identity(4), &cfg, None).unwrap();
        assert!(!tr.complete);
        assert_eq!(tr.steps.len(), 1);
        assert!(tr.error.as_deref().unwrap().starts_with("step 1"));
    }
}
