use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrixkit::SymOperator;

/// Sparse lower factor stored by columns; the diagonal entry leads each column.
#[derive(Debug, Clone)]
pub struct IcFactor {
    n: usize,
    /// `cols[j]` holds `(i, l_ij)` with `i >= j`, `cols[j][0] = (j, l_jj)`.
    cols: Vec<Vec<(usize, f64)>>,
    shift: f64,
}

impl IcFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    /// Diagonal shift that was needed to complete the factorization (0 if none).
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `L⁻ᵀ L⁻¹ x` for one column.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        for (j, col) in self.cols.iter().enumerate() {
            let yj = x[j] / col[0].1;
            x[j] = yj;
            for &(i, l) in &col[1..] {
                x[i] -= l * yj;
            }
        }
        for (j, col) in self.cols.iter().enumerate().rev() {
            let mut s = x[j];
            for &(i, l) in &col[1..] {
                s -= l * x[i];
            }
            x[j] = s / col[0].1;
        }
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        let n = self.n;
        for c in 0..b.ncols() {
            self.solve_in_place(&mut x.as_mut_slice()[c * n..(c + 1) * n]);
        }
        x
    }

    pub fn lower_dense(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, v) in col {
                l[(i, j)] = v;
            }
        }
        l
    }
}

/// Incomplete Cholesky with threshold dropping.
///
/// Left-looking by columns: after division by the pivot, entries with
/// `|l_ij| < droptol · ‖A[:, j]‖₂` are discarded. On a non-positive pivot
/// the factorization is repeated once on `A + 1e-3·max(diag)·I`.
pub fn ic_threshold(a: &SymOperator, droptol: f64) -> Result<IcFactor> {
    if !(droptol >= 0.0) {
        return Err(Error::Parameter(format!("drop tolerance must be >= 0, got {droptol}")));
    }
    match factor(a, droptol, 0.0) {
        Ok(f) => Ok(f),
        Err(Error::NotPositiveDefinite { .. }) => {
            let shift = 1e-3 * a.diag().iter().cloned().fold(0.0, f64::max);
            factor(a, droptol, shift)
        }
        Err(e) => Err(e),
    }
}

fn factor(a: &SymOperator, droptol: f64, shift: f64) -> Result<IcFactor> {
    let n = a.n();
    // lower triangle of A by columns, and column 2-norms of the full matrix
    let mut acols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut norm2 = vec![0.0f64; n];
    a.for_each_lower(|i, j, v| {
        acols[j].push((i, v));
        norm2[j] += v * v;
        if i != j {
            norm2[i] += v * v;
        }
    });
    for c in &mut acols {
        c.sort_by_key(|e| e.0);
    }

    let mut cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    // rows[j] lists (k, position in cols[k]) for the entries l_jk, k < j
    let mut rows: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut work = vec![0.0f64; n];
    let mut mark = vec![usize::MAX; n];
    let mut pattern: Vec<usize> = Vec::new();

    for j in 0..n {
        pattern.clear();
        let touch = |i: usize, pattern: &mut Vec<usize>, work: &mut [f64], mark: &mut [usize]| {
            if mark[i] != j {
                mark[i] = j;
                work[i] = 0.0;
                pattern.push(i);
            }
        };
        touch(j, &mut pattern, &mut work, &mut mark);
        for &(i, v) in &acols[j] {
            touch(i, &mut pattern, &mut work, &mut mark);
            work[i] += v;
        }
        work[j] += shift;
        for &(k, pos) in &rows[j] {
            let col = &cols[k];
            let ljk = col[pos].1;
            for &(i, lik) in &col[pos..] {
                touch(i, &mut pattern, &mut work, &mut mark);
                work[i] -= lik * ljk;
            }
        }
        let d = work[j];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        let thresh = droptol * norm2[j].sqrt();
        pattern.sort_unstable();
        let mut col = Vec::with_capacity(pattern.len());
        col.push((j, ljj));
        for &i in &pattern {
            if i == j {
                continue;
            }
            let l = work[i] / ljj;
            if l != 0.0 && l.abs() >= thresh {
                rows[i].push((j, col.len()));
                col.push((i, l));
            }
        }
        cols.push(col);
    }
    Ok(IcFactor { n, cols, shift })
}
