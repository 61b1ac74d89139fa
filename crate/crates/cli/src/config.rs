use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ritzlab::analysis::BoundKind;
use ritzlab::problems::{intervals_from_h, ProblemKind, ProblemSpec};

use crate::error::CliError;

const KEYS: [&str; 15] = [
    "problem.kind",
    "problem.n",
    "problem.h",
    "precond.kind",
    "precond.droptol",
    "precond.eta",
    "precond.seed",
    "s",
    "track_i",
    "runs",
    "seed_base",
    "max_steps",
    "tol",
    "bounds",
    "outdir",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecondChoice {
    ExactInverse,
    Ic,
    PerturbedIdentity,
    Identity,
}

impl PrecondChoice {
    fn name(self) -> &'static str {
        match self {
            PrecondChoice::ExactInverse => "exact-inverse",
            PrecondChoice::Ic => "ic",
            PrecondChoice::PerturbedIdentity => "perturbed-identity",
            PrecondChoice::Identity => "identity",
        }
    }
}

impl FromStr for PrecondChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact-inverse" => Ok(PrecondChoice::ExactInverse),
            "ic" => Ok(PrecondChoice::Ic),
            "perturbed-identity" => Ok(PrecondChoice::PerturbedIdentity),
            "identity" => Ok(PrecondChoice::Identity),
            _ => Err(format!(
                "unknown preconditioner '{s}' (expected exact-inverse, ic, perturbed-identity or identity)"
            )),
        }
    }
}

/// Resolved experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem_kind: String,
    /// `n` for diag-cluster, `NXxNY` for lap-rect.
    pub problem_n: Option<String>,
    /// Mesh size for lap-slit, kept as written (`1/70` or a decimal).
    pub problem_h: Option<String>,
    pub precond: PrecondChoice,
    pub droptol: f64,
    pub eta: f64,
    pub precond_seed: u64,
    pub s: usize,
    pub track_i: Vec<usize>,
    pub runs: usize,
    pub seed_base: u64,
    pub max_steps: usize,
    pub tol: f64,
    pub bounds: Vec<BoundKind>,
    pub outdir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem_kind: "diag-cluster".into(),
            problem_n: Some("6000".into()),
            problem_h: None,
            precond: PrecondChoice::ExactInverse,
            droptol: 1e-5,
            eta: 0.0,
            precond_seed: 0,
            s: 6,
            track_i: vec![],
            runs: 100,
            seed_base: 0,
            max_steps: 60,
            tol: 1e-10,
            bounds: vec![BoundKind::Thm2e1, BoundKind::Neighbor],
            outdir: PathBuf::from("out"),
        }
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Config { line, msg: format!("invalid value '{v}' for {key}") })
}

/// Parses `1/70` or a decimal.
pub fn parse_h(v: &str) -> Result<f64, String> {
    let v = v.trim();
    let h = match v.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad mesh size '{v}'"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad mesh size '{v}'"))?;
            a / b
        }
        None => v.parse().map_err(|_| format!("bad mesh size '{v}'"))?,
    };
    if !(h > 0.0 && h < 1.0) {
        return Err(format!("mesh size must lie in (0, 1), got {v}"));
    }
    Ok(h)
}

/// Parses `NXxNY`.
pub fn parse_grid(v: &str) -> Result<(usize, usize), String> {
    let (a, b) = v.split_once('x').ok_or_else(|| format!("expected NXxNY, got '{v}'"))?;
    let nx = a.trim().parse().map_err(|_| format!("bad grid '{v}'"))?;
    let ny = b.trim().parse().map_err(|_| format!("bad grid '{v}'"))?;
    Ok((nx, ny))
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Rebuilds a configuration from CSV header comments, ignoring lines
    /// whose key is not a config key.
    pub fn from_echo(comments: &[String]) -> Result<Self, CliError> {
        let lines: Vec<&str> = comments
            .iter()
            .map(String::as_str)
            .filter(|c| c.split_once('=').is_some_and(|(k, _)| KEYS.contains(&k.trim())))
            .collect();
        Self::parse(&lines.join("\n"))
    }

    /// Line-oriented `key = value`; `#` starts a comment. Unknown and
    /// repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = ExperimentConfig::default();
        let mut seen: Vec<&str> = vec![];
        let mut explicit_n = false;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| CliError::Config {
                line,
                msg: format!("expected 'key = value', got '{content}'"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let Some(&known) = KEYS.iter().find(|&&k| k == key) else {
                return Err(CliError::Config { line, msg: format!("unknown key '{key}'") });
            };
            if seen.contains(&known) {
                return Err(CliError::Config { line, msg: format!("key '{key}' given twice") });
            }
            seen.push(known);
            match known {
                "problem.kind" => cfg.problem_kind = value.to_string(),
                // empty values come from echoed headers and mean unset
                "problem.n" => {
                    cfg.problem_n = (!value.is_empty()).then(|| value.to_string());
                    explicit_n = true;
                }
                "problem.h" if value.is_empty() => cfg.problem_h = None,
                "problem.h" => {
                    parse_h(value).map_err(|msg| CliError::Config { line, msg })?;
                    cfg.problem_h = Some(value.to_string());
                }
                "precond.kind" => cfg.precond = value.parse().map_err(|msg| CliError::Config { line, msg })?,
                "precond.droptol" => cfg.droptol = parse_value(line, key, value)?,
                "precond.eta" => cfg.eta = parse_value(line, key, value)?,
                "precond.seed" => cfg.precond_seed = parse_value(line, key, value)?,
                "s" => cfg.s = parse_value(line, key, value)?,
                "track_i" => {
                    cfg.track_i = value
                        .split(',')
                        .map(|v| parse_value(line, key, v.trim()))
                        .collect::<Result<_, _>>()?
                }
                "runs" => cfg.runs = parse_value(line, key, value)?,
                "seed_base" => cfg.seed_base = parse_value(line, key, value)?,
                "max_steps" => cfg.max_steps = parse_value(line, key, value)?,
                "tol" => cfg.tol = parse_value(line, key, value)?,
                "bounds" => {
                    cfg.bounds = if value.is_empty() || value == "none" {
                        vec![]
                    } else {
                        value
                            .split(',')
                            .map(|v| v.trim().parse().map_err(|e: ritzlab::Error| CliError::Config { line, msg: e.to_string() }))
                            .collect::<Result<_, _>>()?
                    }
                }
                "outdir" => cfg.outdir = PathBuf::from(value),
                _ => unreachable!(),
            }
        }
        if cfg.problem_kind != "diag-cluster" && !explicit_n {
            cfg.problem_n = None;
        }
        cfg.validate()?;
        // an unset list means every index, stored explicitly so echoes round-trip
        if cfg.track_i.is_empty() {
            cfg.track_i = (1..=cfg.s).collect();
        }
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.s == 0 {
            return bad("s must be at least 1".into());
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if let Some(&i) = self.track_i.iter().find(|&&i| i == 0 || i > self.s) {
            return bad(format!("track_i entry {i} outside 1..={}", self.s));
        }
        self.problem_spec()?;
        Ok(())
    }

    /// Tracked indices; all of `1..=s` when none were given.
    pub fn tracked(&self) -> Vec<usize> {
        if self.track_i.is_empty() {
            (1..=self.s).collect()
        } else {
            self.track_i.clone()
        }
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec, CliError> {
        let need_n = || {
            self.problem_n
                .as_deref()
                .ok_or_else(|| CliError::Usage(format!("problem.n is required for {}", self.problem_kind)))
        };
        let kind = match self.problem_kind.as_str() {
            "diag-cluster" => {
                let n = need_n()?;
                ProblemKind::DiagCluster {
                    n: n.parse().map_err(|_| CliError::Usage(format!("problem.n must be an integer, got {n}")))?,
                }
            }
            "lap-slit" => {
                let h = self
                    .problem_h
                    .as_deref()
                    .ok_or_else(|| CliError::Usage("problem.h is required for lap-slit".into()))?;
                let h = parse_h(h).map_err(CliError::Usage)?;
                ProblemKind::LapSlit {
                    m: intervals_from_h(h).map_err(|e| CliError::Usage(e.to_string()))?,
                }
            }
            "lap-rect" => {
                let (nx, ny) = parse_grid(need_n()?).map_err(CliError::Usage)?;
                ProblemKind::LapRect {
                    nx,
                    ny,
                    hx: 1.0 / (nx + 1) as f64,
                    hy: 1.0 / (ny + 1) as f64,
                }
            }
            other => {
                return Err(CliError::Usage(format!(
                    "unknown problem.kind '{other}' (expected diag-cluster, lap-slit or lap-rect)"
                )))
            }
        };
        Ok(ProblemSpec::new(kind))
    }

    /// Every key with its resolved value, one `key = value` per line.
    pub fn echo(&self) -> Vec<String> {
        let mut out = vec![];
        let opt = |v: &Option<String>| v.clone().unwrap_or_default();
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        out.push(format!("problem.kind = {}", self.problem_kind));
        out.push(format!("problem.n = {}", opt(&self.problem_n)));
        out.push(format!("problem.h = {}", opt(&self.problem_h)));
        out.push(format!("precond.kind = {}", self.precond.name()));
        out.push(format!("precond.droptol = {:e}", self.droptol));
        out.push(format!("precond.eta = {}", self.eta));
        out.push(format!("precond.seed = {}", self.precond_seed));
        out.push(format!("s = {}", self.s));
        out.push(format!("track_i = {}", list(&self.tracked())));
        out.push(format!("runs = {}", self.runs));
        out.push(format!("seed_base = {}", self.seed_base));
        out.push(format!("max_steps = {}", self.max_steps));
        out.push(format!("tol = {:e}", self.tol));
        let mut b = String::new();
        for (k, kind) in self.bounds.iter().enumerate() {
            let _ = write!(b, "{}{kind}", if k > 0 { "," } else { "" });
        }
        out.push(format!("bounds = {}", if b.is_empty() { "none".into() } else { b }));
        out.push(format!("outdir = {}", self.outdir.display()));
        out
    }
}
