use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ritzlab::eigsolve::{AuxFields, IterTrace, StepRecord};
use ritzlab::oracle::Spectrum;

use crate::error::CliError;

/// A CSV file with `# ` header comments.
pub struct Table {
    pub path: PathBuf,
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        if !path.exists() {
            return Err(CliError::MissingInputs(vec![path.to_path_buf()]));
        }
        let text = std::fs::read_to_string(path)?;
        let comments = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .map(|l| l.trim_start_matches('#').trim().to_string())
            .collect();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .flexible(false)
            .from_reader(text.as_bytes());
        let columns = rdr
            .headers()
            .map_err(|e| self_err(path, e))?
            .iter()
            .map(String::from)
            .collect();
        let mut rows = vec![];
        for rec in rdr.records() {
            rows.push(rec.map_err(|e| self_err(path, e))?.iter().map(String::from).collect());
        }
        Ok(Self {
            path: path.to_path_buf(),
            comments,
            columns,
            rows,
        })
    }

    pub fn col(&self, name: &str) -> Result<usize, CliError> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| CliError::Input {
            path: self.path.clone(),
            msg: format!("missing column '{name}'"),
        })
    }

    pub fn parse<T: std::str::FromStr>(&self, row: usize, col: usize) -> Result<T, CliError> {
        let v = &self.rows[row][col];
        v.parse().map_err(|_| CliError::Input {
            path: self.path.clone(),
            msg: format!("row {}: cannot parse '{v}' in column '{}'", row + 1, self.columns[col]),
        })
    }

    pub fn parse_opt<T: std::str::FromStr>(&self, row: usize, col: usize) -> Result<Option<T>, CliError> {
        if self.rows[row][col].is_empty() {
            Ok(None)
        } else {
            self.parse(row, col).map(Some)
        }
    }

    /// Value of a `key = value` header comment.
    pub fn comment_value(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|c| {
            let (k, v) = c.split_once('=')?;
            (k.trim() == key).then(|| v.trim())
        })
    }
}

fn self_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Input {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

/// Reads `index,value,residual`; the last row's index is `n` and its value `μ_n`.
pub fn read_spectrum(path: &Path) -> Result<Spectrum, CliError> {
    let t = Table::read(path)?;
    let (ci, cv) = (t.col("index")?, t.col("value")?);
    let mut values = vec![];
    let mut residuals = vec![];
    let cr = t.col("residual")?;
    let mut last = (0usize, 0.0f64);
    for r in 0..t.rows.len() {
        let idx: usize = t.parse(r, ci)?;
        let v: f64 = t.parse(r, cv)?;
        if idx == values.len() + 1 {
            values.push(v);
            residuals.push(t.parse_opt(r, cr)?.unwrap_or(0.0));
        }
        last = (idx, v);
    }
    if last.0 == 0 {
        return Err(CliError::Input {
            path: path.to_path_buf(),
            msg: "empty spectrum".into(),
        });
    }
    Ok(Spectrum {
        values,
        vectors: None,
        residuals,
        n: last.0,
        mu_min: last.1,
    })
}

/// Rebuilds traces from a trace CSV; `reference` becomes each trace's
/// reference values.
pub fn read_traces(path: &Path, reference: &[f64]) -> Result<Vec<IterTrace>, CliError> {
    let t = Table::read(path)?;
    let c = |n| t.col(n);
    let (crun, cstep, ci, cth, cres, cph, cg, cdt, cdh) = (
        c("run_id")?,
        c("step")?,
        c("i")?,
        c("theta")?,
        c("resnorm")?,
        c("phase")?,
        c("gamma_tilde")?,
        c("dim_tilde")?,
        c("dim_hat")?,
    );
    let seed: u64 = t.comment_value("seed").and_then(|v| v.parse().ok()).unwrap_or(0);
    let mut runs: BTreeMap<usize, BTreeMap<usize, StepRecord>> = BTreeMap::new();
    for r in 0..t.rows.len() {
        let run: usize = t.parse(r, crun)?;
        let step: usize = t.parse(r, cstep)?;
        let i: usize = t.parse(r, ci)?;
        let rec = runs.entry(run).or_default().entry(step).or_insert_with(|| StepRecord {
            step,
            theta: vec![],
            resnorm: vec![],
            phase: None,
            aux: vec![],
        });
        if i != rec.theta.len() + 1 {
            return Err(CliError::Input {
                path: path.to_path_buf(),
                msg: format!("row {}: Ritz index {i} out of order", r + 1),
            });
        }
        rec.theta.push(t.parse(r, cth)?);
        rec.resnorm.push(t.parse(r, cres)?);
        rec.phase = t.parse_opt::<u8>(r, cph)?.map(|p| p == 1);
        rec.aux.push(AuxFields {
            gamma_tilde: t.parse_opt(r, cg)?,
            dim_tilde: t.parse_opt(r, cdt)?,
            dim_hat: t.parse_opt(r, cdh)?,
        });
    }
    let complete = t.comment_value("complete").map_or(true, |v| v == "true");
    let converged = t.comment_value("converged").is_some_and(|v| v == "true");
    Ok(runs
        .into_iter()
        .map(|(run_id, steps)| {
            let steps: Vec<StepRecord> = steps.into_values().collect();
            IterTrace {
                run_id,
                seed,
                s: steps.first().map_or(0, |r| r.theta.len()),
                steps,
                complete,
                converged,
                error: t.comment_value("error").map(String::from),
                reference: Some(reference.to_vec()),
                config: vec![],
            }
        })
        .collect())
}
