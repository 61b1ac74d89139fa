use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::matrixkit::{CsrUpper, SymOperator};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Layout {
    Coordinate,
    Array,
}

/// Reads a real symmetric matrix from a MatrixMarket file.
///
/// Files flagged `general` are accepted when their entries are symmetric.
/// The result is diagonal when no off-diagonal entry is present and CSR
/// otherwise.
pub fn mm_read(path: impl AsRef<Path>) -> Result<SymOperator> {
    let text = fs::read_to_string(path)?;
    mm_parse(&text)
}

pub(crate) fn mm_parse(text: &str) -> Result<SymOperator> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let perr = |line: usize, msg: String| Error::Parse { line, msg };
    let toks: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if toks.len() != 5 || toks[0] != "%%matrixmarket" || toks[1] != "matrix" {
        return Err(perr(hline, "expected '%%MatrixMarket matrix <format> <field> <symmetry>'".into()));
    }
    let layout = match toks[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(perr(hline, format!("unknown format '{other}'"))),
    };
    match toks[3].as_str() {
        "real" | "double" | "integer" => {}
        other => return Err(perr(hline, format!("unsupported field '{other}'"))),
    }
    let symmetric = match toks[4].as_str() {
        "symmetric" => true,
        "general" => false,
        other => return Err(perr(hline, format!("unsupported symmetry '{other}'"))),
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (sline, size) = body
        .next()
        .ok_or_else(|| perr(hline + 1, "missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| perr(sline, format!("bad size line: {e}")))?;
    let (nr, nc) = match (layout, dims.as_slice()) {
        (Layout::Coordinate, [r, c, _]) | (Layout::Array, [r, c]) => (*r, *c),
        _ => return Err(perr(sline, "wrong number of size fields".into())),
    };
    if nr != nc {
        return Err(perr(sline, format!("matrix is {nr}x{nc}, not square")));
    }
    let n = nr;

    // raw entries (row, col, value, line), 0-based indices
    let mut raw: Vec<(usize, usize, f64, usize)> = Vec::new();
    match layout {
        Layout::Coordinate => {
            let nnz = dims[2];
            for (line, text) in body.by_ref() {
                let f: Vec<&str> = text.split_whitespace().collect();
                if f.len() != 3 {
                    return Err(perr(line, "expected 'row col value'".into()));
                }
                let i: usize = f[0].parse().map_err(|_| perr(line, format!("bad row index '{}'", f[0])))?;
                let j: usize = f[1].parse().map_err(|_| perr(line, format!("bad column index '{}'", f[1])))?;
                let v: f64 = f[2].parse().map_err(|_| perr(line, format!("bad value '{}'", f[2])))?;
                if i == 0 || j == 0 || i > n || j > n {
                    return Err(perr(line, format!("index ({i}, {j}) out of range")));
                }
                if symmetric && i < j {
                    return Err(perr(line, "symmetric files store the lower triangle only".into()));
                }
                raw.push((i - 1, j - 1, v, line));
            }
            if raw.len() != nnz {
                return Err(perr(sline, format!("size line announces {nnz} entries, found {}", raw.len())));
            }
        }
        Layout::Array => {
            let mut vals = Vec::new();
            let mut last_line = sline;
            for (line, text) in body.by_ref() {
                for t in text.split_whitespace() {
                    let v: f64 = t.parse().map_err(|_| perr(line, format!("bad value '{t}'")))?;
                    vals.push((v, line));
                }
                last_line = line;
            }
            let expected = if symmetric { n * (n + 1) / 2 } else { n * n };
            if vals.len() != expected {
                return Err(perr(last_line, format!("expected {expected} values, found {}", vals.len())));
            }
            let mut it = vals.into_iter();
            for j in 0..n {
                let start = if symmetric { j } else { 0 };
                for i in start..n {
                    let (v, line) = it.next().unwrap();
                    raw.push((i, j, v, line));
                }
            }
        }
    }

    let mut full: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for &(i, j, v, line) in &raw {
        if let Some(&(_, first)) = full.get(&(i, j)) {
            return Err(perr(line, format!("duplicate entry ({}, {}), first on line {first}", i + 1, j + 1)));
        }
        full.insert((i, j), (v, line));
    }
    if !symmetric {
        for (&(i, j), &(v, line)) in &full {
            if i == j {
                continue;
            }
            match full.get(&(j, i)) {
                None if v != 0.0 => {
                    return Err(perr(line, format!("entry ({}, {}) has no symmetric counterpart", i + 1, j + 1)));
                }
                Some(&(w, other)) if w != v => {
                    return Err(perr(
                        line.max(other),
                        format!("entries ({}, {}) = {v} and ({}, {}) = {w} conflict", i + 1, j + 1, j + 1, i + 1),
                    ));
                }
                _ => {}
            }
        }
    }
    let lower: BTreeMap<(usize, usize), f64> = full
        .into_iter()
        .filter(|((i, j), (v, _))| i >= j && *v != 0.0)
        .map(|(k, (v, _))| (k, v))
        .collect();

    if lower.keys().all(|(r, c)| r == c) {
        let mut d = DVector::zeros(n);
        for (&(r, _), &v) in &lower {
            d[r] = v;
        }
        return Ok(SymOperator::diagonal(d));
    }
    let trip: Vec<(usize, usize, f64)> = lower.iter().map(|(&(r, c), &v)| (c, r, v)).collect();
    SymOperator::csr(n, CsrUpper::from_upper_triplets(n, trip)?)
}

/// Writes the lower triangle in coordinate symmetric format with 17
/// significant digits, which reproduces every `f64` exactly on reading.
pub fn mm_write(op: &SymOperator, path: impl AsRef<Path>) -> Result<()> {
    let mut entries = Vec::with_capacity(op.nnz_lower());
    op.for_each_lower(|i, j, v| entries.push((j, i, v)));
    entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(w, "{} {} {}", op.n(), op.n(), entries.len())?;
    for (j, i, v) in entries {
        writeln!(w, "{} {} {:.16e}", i + 1, j + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.mtx");
        let op = SymOperator::diagonal(DVector::from_vec(vec![1.0, 2.0, 3.0]));
        mm_write(&op, &p).unwrap();
        let back = mm_read(&p).unwrap();
        assert_eq!(back.to_dense(), op.to_dense());
    }

    #[test]
    fn awkward_values_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.mtx");
        let (a, _) = crate::problems::gen_laplacian_rect(3, 2, 1.0 / 3.0, 0.7).unwrap();
        let a = a.scaled(std::f64::consts::PI / 7.0);
        mm_write(&a, &p).unwrap();
        let back = mm_read(&p).unwrap();
        assert_eq!(back.to_dense(), a.to_dense());
    }

    #[test]
    fn general_symmetric_file_is_accepted() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 4\n1 1 2\n1 2 -1\n2 1 -1\n2 2 2\n";
        let op = mm_parse(text).unwrap();
        assert_eq!(op.entry(0, 1), -1.0);
        assert_eq!(op.entry(1, 0), -1.0);
    }

    #[test]
    fn conflicting_mirror_entry() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 2\n1 2 -1\n2 1 -2\n";
        match mm_parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_mirror_entry() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 2\n1 2 -1\n";
        assert!(matches!(mm_parse(text), Err(Error::Parse { .. })));
    }

    #[test]
    fn malformed_entry_line() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 2\n1 1 2\n2 x 1\n";
        match mm_parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn array_symmetric() {
        let text = "%%MatrixMarket matrix array real symmetric\n2 2\n4\n1\n3\n";
        let op = mm_parse(text).unwrap();
        assert_eq!(op.to_dense(), nalgebra::DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]));
    }
}
