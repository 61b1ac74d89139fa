use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use ritzlab::analysis::{AuxTracker, GammaSample};
use ritzlab::eigsolve::{run_iteration_observed, write_trace_csv, IterTrace, Pencil, RunConfig};
use ritzlab::oracle::{reference_spectrum, Orientation, Spectrum};
use ritzlab::precond::{
    assess_quality, make_exact_inverse, make_ic_threshold, make_identity, make_perturbed_identity, PrecondQuality,
    Preconditioner,
};
use ritzlab::problems::{mm_write, Problem, ProblemSpec};

use crate::config::{ExperimentConfig, PrecondChoice};
use crate::error::CliError;

pub fn trace_path(outdir: &Path, run_id: usize) -> PathBuf {
    outdir.join(format!("trace_{run_id:04}.csv"))
}

/// Writes the `.mtx` files of a problem and, when known, its closed-form
/// spectrum.
pub fn cmd_gen(spec: &ProblemSpec, prefix: &Path) -> Result<Vec<PathBuf>, CliError> {
    let p = spec.build()?;
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let stem = prefix.display().to_string();
    let mut written = vec![];
    let a_path = PathBuf::from(format!("{stem}_A.mtx"));
    mm_write(&p.a, &a_path)?;
    written.push(a_path);
    if !p.m.is_identity() {
        let m_path = PathBuf::from(format!("{stem}_M.mtx"));
        mm_write(&p.m, &m_path)?;
        written.push(m_path);
    }
    if let Some(sp) = exact_spectrum(&p) {
        let path = PathBuf::from(format!("{stem}_spectrum.csv"));
        sp.write_csv(&path, &format!("problem = {}\nn = {}", p.name, p.a.n()))?;
        written.push(path);
    }
    Ok(written)
}

fn exact_spectrum(p: &Problem) -> Option<Spectrum> {
    let mu = p.exact_mu.as_ref()?;
    let mut values = mu.clone();
    values.sort_by(|x, y| y.total_cmp(x));
    Some(Spectrum {
        mu_min: *values.last()?,
        n: values.len(),
        residuals: vec![0.0; values.len()],
        values,
        vectors: None,
    })
}

/// Leading `k` reference eigenpairs written to `out`.
pub fn cmd_eig(spec: &ProblemSpec, k: usize, out: &Path) -> Result<Spectrum, CliError> {
    let p = spec.build()?;
    let sp = reference_spectrum(&p, k)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    sp.write_csv(out, &format!("problem = {}\nn = {}\nk = {k}", p.name, p.a.n()))?;
    Ok(sp)
}

pub fn build_preconditioner(cfg: &ExperimentConfig, p: &Problem) -> Result<Preconditioner, CliError> {
    let n = p.a.n();
    Ok(match cfg.precond {
        PrecondChoice::ExactInverse => make_exact_inverse(&p.a)?,
        PrecondChoice::Ic => make_ic_threshold(&p.a, cfg.droptol)?,
        PrecondChoice::PerturbedIdentity => make_perturbed_identity(n, cfg.eta, None, cfg.precond_seed)?,
        PrecondChoice::Identity => make_identity(n),
    })
}

/// Outcome of one seeded run.
pub struct RunOutcome {
    pub trace: IterTrace,
    pub samples: Vec<(usize, Vec<GammaSample>)>,
    pub aux_error: Option<String>,
}

impl RunOutcome {
    /// `Σ_i (μ_i − θ_i)` at the last recorded step.
    pub fn final_error_sum(&self) -> f64 {
        final_errors(&self.trace).iter().sum()
    }
}

pub fn final_errors(t: &IterTrace) -> Vec<f64> {
    match (t.last(), &t.reference) {
        (Some(r), Some(mu)) => r.theta.iter().zip(mu).map(|(th, m)| m - th).collect(),
        _ => vec![],
    }
}

/// Largest final-step error sum; ties go to the lowest seed.
pub fn slowest_run(outcomes: &[RunOutcome]) -> Option<usize> {
    let mut best: Option<(f64, u64, usize)> = None;
    for (k, o) in outcomes.iter().enumerate() {
        let e = o.final_error_sum();
        let seed = o.trace.seed;
        let better = match best {
            None => true,
            Some((be, bs, _)) => e > be || (e == be && seed < bs),
        };
        if better {
            best = Some((e, seed, k));
        }
    }
    best.map(|b| b.2)
}

pub struct RunSummary {
    pub outcomes: Vec<RunOutcome>,
    pub quality: PrecondQuality,
    pub slowest: usize,
}

/// Runs all seeds of an experiment and writes its outputs to `cfg.outdir`.
///
/// Files: `spectrum.csv`, one `trace_NNNN.csv` per run, `gamma.csv`,
/// `final_errors.csv` and `summary.csv`, each headed by the resolved config.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunSummary, CliError> {
    let problem = cfg.problem_spec()?.build()?;
    let n = problem.a.n();
    if cfg.s + 1 >= n {
        return Err(CliError::Usage(format!("block size {} too large for n = {n}", cfg.s)));
    }
    let pencil = Pencil::from_problem(&problem)?;
    let reference = reference_spectrum(&problem, cfg.s + 2)?;
    let t = build_preconditioner(cfg, &problem)?;
    let quality = assess_quality(&t, &problem.a)?;
    let t = t.scaled(quality.omega);
    let tracked = cfg.tracked();

    std::fs::create_dir_all(&cfg.outdir)?;
    let mut header = cfg.echo();
    header.push(format!("problem = {}", problem.name));
    header.push(format!("n = {n}"));
    header.push(format!("alpha = {:.17e}", quality.alpha));
    header.push(format!("beta = {:.17e}", quality.beta));
    header.push(format!("omega = {:.17e}", quality.omega));
    header.push(format!("gamma = {:.17e}", quality.gamma));

    let sp_out = exact_spectrum(&problem).unwrap_or_else(|| Spectrum {
        vectors: None,
        ..reference.clone()
    });
    sp_out.write_csv(cfg.outdir.join("spectrum.csv"), &header.join("\n"))?;

    let outcomes: Vec<RunOutcome> = (0..cfg.runs)
        .into_par_iter()
        .map(|run_id| -> Result<RunOutcome, CliError> {
            let rc = RunConfig {
                s: cfg.s,
                max_steps: cfg.max_steps,
                tol: cfg.tol,
                seed: cfg.seed_base + run_id as u64,
                run_id,
                ..Default::default()
            };
            let mut tracker = AuxTracker::new(&pencil, &t, &reference, &tracked, cfg.s, cfg.s)?;
            let trace = run_iteration_observed(&pencil, &t, &rc, Some(&reference), &mut tracker)?;
            let samples = tracked.iter().copied().zip(tracker.samples.iter().cloned()).collect();
            Ok(RunOutcome {
                trace,
                samples,
                aux_error: tracker.error.clone(),
            })
        })
        .collect::<Result<_, _>>()?;

    for o in &outcomes {
        let mut h = header.clone();
        h.push(format!("seed = {}", o.trace.seed));
        h.push(format!("complete = {}", o.trace.complete));
        h.push(format!("converged = {}", o.trace.converged));
        if let Some(e) = &o.trace.error {
            h.push(format!("error = {e}"));
        }
        let w = BufWriter::new(File::create(trace_path(&cfg.outdir, o.trace.run_id))?);
        write_trace_csv(std::slice::from_ref(&o.trace), &h, Orientation::LargestMu, w)?;
    }
    write_gamma_csv(&outcomes, &header, &cfg.outdir.join("gamma.csv"))?;

    let slowest = slowest_run(&outcomes).expect("runs >= 1");
    write_final_errors(&outcomes, slowest, &header, &cfg.outdir.join("final_errors.csv"))?;
    let mut h = header.clone();
    h.push(format!("slowest_run = {}", outcomes[slowest].trace.run_id));
    let mut w = BufWriter::new(File::create(cfg.outdir.join("summary.csv"))?);
    for line in &h {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "run_id,seed,steps,complete,converged,phase_entry,err_sum,aux_error,error")?;
    for o in &outcomes {
        let t = &o.trace;
        let entry = t.phase_entry().map(|k| t.steps[k].step.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{:.6e},{},{}",
            t.run_id,
            t.seed,
            t.steps.len().saturating_sub(1),
            t.complete,
            t.converged,
            entry,
            o.final_error_sum(),
            csv_text(o.aux_error.as_deref()),
            csv_text(t.error.as_deref()),
        )?;
    }
    w.flush()?;
    Ok(RunSummary {
        outcomes,
        quality,
        slowest,
    })
}

/// Free text for a CSV cell: commas and quotes are replaced.
fn csv_text(s: Option<&str>) -> String {
    s.unwrap_or("").replace([',', '"', '\n'], " ")
}

fn write_gamma_csv(outcomes: &[RunOutcome], header: &[String], path: &Path) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    for line in header {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "run_id,i,step,gamma_tilde,dim_tilde,dim_hat,dim_u_tilde,dim_u_hat,dim_next,valid,dims_ok,lemma_ok")?;
    for o in outcomes {
        for (i, samples) in &o.samples {
            for g in samples {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    o.trace.run_id,
                    i,
                    g.step,
                    g.gamma_tilde.map(|v| format!("{v:.10e}")).unwrap_or_default(),
                    g.dim_tilde,
                    g.dim_hat,
                    g.dim_u_tilde,
                    g.dim_u_hat,
                    g.dim_next,
                    g.valid,
                    g.dims_ok,
                    g.lemma_ok.map(|b| b.to_string()).unwrap_or_default(),
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_final_errors(outcomes: &[RunOutcome], slowest: usize, header: &[String], path: &Path) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    for line in header {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "i,max_over_runs,slowest_run")?;
    let per_run: Vec<Vec<f64>> = outcomes.iter().map(|o| final_errors(&o.trace)).collect();
    let s = per_run.iter().map(Vec::len).max().unwrap_or(0);
    for i in 0..s {
        let max = per_run.iter().filter_map(|e| e.get(i)).cloned().fold(f64::NEG_INFINITY, f64::max);
        let slow = per_run[slowest].get(i).map(|e| format!("{e:.6e}")).unwrap_or_default();
        writeln!(w, "{},{:.6e},{}", i + 1, max, slow)?;
    }
    w.flush()?;
    Ok(())
}
