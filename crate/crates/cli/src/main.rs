//! Experiment runner for block preconditioned gradient eigensolvers.

mod bounds_cmd;
mod commands;
mod config;
mod csvio;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ritzlab::problems::{intervals_from_h, ProblemKind, ProblemSpec};

use bounds_cmd::QSource;
use config::{parse_h, ExperimentConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "ritzlab", version, about = "Ritz value convergence experiments for BPG eigensolvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ProblemArgs {
    /// diag-cluster | lap-slit | lap-rect
    #[arg(long)]
    problem: String,
    /// Dimension of diag-cluster
    #[arg(long)]
    n: Option<usize>,
    /// Mesh size of lap-slit: 1/70, 0.0142857..., or the interval count 70
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
}

impl ProblemArgs {
    fn spec(&self) -> Result<ProblemSpec, CliError> {
        let missing = |f: &str| CliError::Usage(format!("--{f} is required for --problem {}", self.problem));
        let kind = match self.problem.as_str() {
            "diag-cluster" => ProblemKind::DiagCluster { n: self.n.ok_or_else(|| missing("n"))? },
            "lap-slit" => {
                let h = self.h.as_deref().ok_or_else(|| missing("h"))?;
                let m = match h.parse::<usize>() {
                    Ok(m) => m,
                    Err(_) => intervals_from_h(parse_h(h).map_err(CliError::Usage)?).map_err(|e| CliError::Usage(e.to_string()))?,
                };
                ProblemKind::LapSlit { m }
            }
            "lap-rect" => {
                let (Some(nx), Some(ny)) = (self.nx, self.ny) else {
                    return Err(missing("nx and --ny"));
                };
                ProblemKind::LapRect {
                    nx,
                    ny,
                    hx: 1.0 / (nx + 1) as f64,
                    hy: 1.0 / (ny + 1) as f64,
                }
            }
            other => return Err(CliError::Usage(format!("unknown problem '{other}'"))),
        };
        Ok(ProblemSpec::new(kind))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the matrices of a test problem (and its closed-form spectrum)
    Gen {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Output prefix; files are PREFIX_A.mtx, PREFIX_M.mtx, PREFIX_spectrum.csv
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute leading reference eigenvalues
    Eig {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment described by a config file
    Run { config: PathBuf },
    /// Evaluate and validate bound curves on the traces of a run directory
    Bounds {
        dir: PathBuf,
        /// gamma-tilde (per-run maximum), gamma, or a number
        #[arg(long, default_value = "gamma-tilde")]
        q: String,
    },
    /// Plot errors and bounds of the slowest run as SVG
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Output file (single directory only)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen { problem, out } => {
            for p in commands::cmd_gen(&problem.spec()?, &out)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Eig { problem, k, out } => {
            let sp = commands::cmd_eig(&problem.spec()?, k, &out)?;
            for (i, v) in sp.values.iter().enumerate() {
                println!("mu_{} = {v:.15e}", i + 1);
            }
            println!("mu_n = {:.15e}", sp.mu_min);
        }
        Command::Run { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let summary = commands::cmd_run(&cfg)?;
            let failed: Vec<_> = summary.outcomes.iter().filter(|o| !o.trace.complete).collect();
            let converged = summary.outcomes.iter().filter(|o| o.trace.converged).count();
            println!(
                "{} runs, {converged} converged, gamma = {:.4}, slowest run {}; output in {}",
                summary.outcomes.len(),
                summary.quality.gamma,
                summary.outcomes[summary.slowest].trace.run_id,
                cfg.outdir.display()
            );
            if !failed.is_empty() {
                for o in &failed {
                    eprintln!("run {}: {}", o.trace.run_id, o.trace.error.as_deref().unwrap_or("failed"));
                }
                return Err(CliError::Numerical(ritzlab::Error::NoConvergence {
                    what: "experiment",
                    detail: format!("{} of {} runs failed", failed.len(), summary.outcomes.len()),
                }));
            }
        }
        Command::Bounds { dir, q } => {
            let src: QSource = q.parse().map_err(CliError::Usage)?;
            let report = bounds_cmd::cmd_bounds(&dir, src)?;
            for line in bounds_cmd::summarize(&report) {
                println!("{line}");
            }
            let bad = report.gating_failures();
            if bad > 0 {
                return Err(CliError::Validation(format!(
                    "{bad} bound checks violated; see {}",
                    dir.join("violations.csv").display()
                )));
            }
        }
        Command::Report { dirs, out } => {
            if out.is_some() && dirs.len() > 1 {
                return Err(CliError::Usage("--out needs a single directory".into()));
            }
            for d in &dirs {
                let p = report::cmd_report(d, out.as_deref())?;
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
