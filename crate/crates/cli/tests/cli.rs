use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ritzlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ritzlab"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn ritzlab")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_string)
        .collect()
}

#[test]
fn gen_rect_writes_matrix_and_closed_form_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let out = ritzlab(&["gen", "--problem", "lap-rect", "--nx", "3", "--ny", "1", "--out", "r"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mtx = fs::read_to_string(dir.path().join("r_A.mtx")).unwrap();
    assert!(mtx.starts_with("%%MatrixMarket matrix coordinate real symmetric"));
    let rows = data_rows(&dir.path().join("r_spectrum.csv"));
    // hx = 1/4, hy = 1/2: λ_p = (2 − 2cos(pπ/4))·16 + (2 − 2cos(π/2))·4
    let mut lam: Vec<f64> = (1..=3)
        .map(|p| 16.0 * (2.0 - 2.0 * (p as f64 * std::f64::consts::PI / 4.0).cos()) + 8.0)
        .collect();
    lam.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mu: Vec<f64> = rows
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(mu.len() >= 3);
    for (k, l) in lam.iter().enumerate() {
        assert!((mu[k] - 1.0 / l).abs() < 1e-12, "{} vs {}", mu[k], 1.0 / l);
    }
}

#[test]
fn gen_slit_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let out = ritzlab(&["gen", "--problem", "lap-slit", "--h", "1/70", "--out", "s"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mtx = fs::read_to_string(dir.path().join("s_A.mtx")).unwrap();
    let size = mtx.lines().find(|l| !l.starts_with('%')).unwrap();
    assert!(size.starts_with("9534 9534 "), "{size}");
}

#[test]
fn missing_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ritzlab(&["gen", "--problem", "diag-cluster", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = ritzlab(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_key_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "problem.kind = diag-cluster\nproblem.n = 50\nblocksize = 3\n");
    let out = ritzlab(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("blocksize"), "{err}");
}

#[test]
fn zero_steps_records_initial_ritz_values_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "z.cfg",
        "problem.kind = diag-cluster\nproblem.n = 200\ns = 3\nruns = 1\nmax_steps = 0\noutdir = z\n",
    );
    let out = ritzlab(&["run", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = data_rows(&dir.path().join("z/trace_0000.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("0")));
}

const SMALL_EX1: &str = "\
problem.kind = diag-cluster
problem.n = 300
precond.kind = exact-inverse
s = 6
runs = 3
max_steps = 25
bounds = thm2e1,neighbor,lm2e1
outdir = o
";

#[test]
fn run_bounds_report_pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "e.cfg", SMALL_EX1);
    let mut snapshots = vec![];
    for _ in 0..2 {
        let _ = fs::remove_dir_all(dir.path().join("o"));
        let out = ritzlab(&["run", &cfg], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let out = ritzlab(&["bounds", "o"], dir.path());
        assert!(
            out.status.success(),
            "{}{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
        let out = ritzlab(&["report", "o"], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let mut files: Vec<_> = fs::read_dir(dir.path().join("o"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        snapshots.push(files.iter().map(|p| (p.file_name().unwrap().to_owned(), fs::read(p).unwrap())).collect::<Vec<_>>());
    }
    assert_eq!(snapshots[0].len(), snapshots[1].len());
    for (a, b) in snapshots[0].iter().zip(&snapshots[1]) {
        assert_eq!(a.0, b.0);
        assert!(a.1 == b.1, "{:?} differs between runs", a.0);
    }
    let names: Vec<String> = snapshots[0].iter().map(|f| f.0.to_string_lossy().into_owned()).collect();
    for want in ["summary.csv", "spectrum.csv", "gamma.csv", "bounds.csv", "validation.csv", "violations.csv", "report.svg", "trace_0002.csv"] {
        assert!(names.iter().any(|n| n == want), "missing {want}");
    }

    // every output CSV carries the resolved config
    for n in names.iter().filter(|n| n.ends_with(".csv")) {
        let text = fs::read_to_string(dir.path().join("o").join(n)).unwrap();
        assert!(text.contains("# precond.kind = exact-inverse"), "{n}");
    }
    let validation = fs::read_to_string(dir.path().join("o/validation.csv")).unwrap();
    assert!(validation.lines().any(|l| l.contains(",thm2e1,1,") && l.contains(",pass,")));
    assert_eq!(data_rows(&dir.path().join("o/violations.csv")).len(), 0);
    let svg = fs::read_to_string(dir.path().join("o/report.svg")).unwrap();
    assert!(svg.contains("stroke-dasharray=\"6 4\""), "dashed bound curves");
    assert!(svg.contains("stroke-dasharray=\"1 3\""), "dotted neighbor curves");
}

#[test]
fn manual_q_is_not_gating() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "e.cfg", SMALL_EX1);
    assert!(ritzlab(&["run", &cfg], dir.path()).status.success());
    let out = ritzlab(&["bounds", "o", "--q", "0.3"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("thm2e1 i=1") && stdout.contains("not gating"), "{stdout}");
    let out = ritzlab(&["bounds", "o", "--q", "abc"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn report_without_bounds_lists_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = ritzlab(&["report", "nowhere"], dir.path());
    assert_ne!(out.status.code(), Some(0));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("summary.csv") && err.contains("bounds.csv"), "{err}");
}

#[test]
fn bounds_on_missing_dir_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = ritzlab(&["bounds", "nowhere"], dir.path());
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spectrum.csv"));
}
