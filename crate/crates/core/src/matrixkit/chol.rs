use nalgebra::{DMatrix, DVector};

use super::operator::{BandedLower, Storage, SymOperator};
use crate::error::{Error, Result};

/// Largest `n * (bw + 1)` accepted when a CSR matrix is refactored in band form.
const MAX_BAND_ENTRIES: usize = 200_000_000;

#[derive(Debug, Clone)]
enum LowerFactor {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
    Banded(BandedLower),
}

/// Cholesky factor `L` with `L Lᵀ = P A Pᵀ`.
///
/// Only the natural ordering is produced; `ordering` is kept so that
/// callers do not depend on that.
#[derive(Debug, Clone)]
pub struct CholFactor {
    n: usize,
    ordering: Vec<usize>,
    lower: LowerFactor,
}

/// Dense Cholesky of a symmetric positive definite matrix (lower triangle read).
pub fn dense_cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

pub(crate) fn banded_cholesky(a: &BandedLower) -> Result<BandedLower> {
    let n = a.n;
    let bw = a.bw;
    let w = bw + 1;
    let mut l = a.clone();
    for i in 0..n {
        let jstart = i.saturating_sub(bw);
        for j in jstart..=i {
            // s = a[i,j] - sum_k l[i,k] l[j,k], k in [max(i-bw, j-bw, 0), j)
            let mut s = l.data[i * w + (i - j)];
            let kstart = jstart.max(j.saturating_sub(bw));
            for k in kstart..j {
                s -= l.data[i * w + (i - k)] * l.data[j * w + (j - k)];
            }
            if j == i {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                }
                l.data[i * w] = s.sqrt();
            } else {
                l.data[i * w + (i - j)] = s / l.data[j * w];
            }
        }
    }
    Ok(l)
}

impl CholFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    /// Solves `A X = B` column by column.
    pub fn solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.nrows() != self.n {
            return Err(Error::dims("CholFactor::solve", self.n, b.nrows()));
        }
        let mut x = b.clone();
        let n = self.n;
        for c in 0..b.ncols() {
            let col = &mut x.as_mut_slice()[c * n..(c + 1) * n];
            self.solve_in_place(col);
        }
        Ok(x)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        if b.len() != self.n {
            return Err(Error::dims("CholFactor::solve_vec", self.n, b.len()));
        }
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        Ok(x)
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        match &self.lower {
            LowerFactor::Diagonal(d) => {
                for i in 0..n {
                    x[i] /= d[i] * d[i];
                }
            }
            LowerFactor::Dense(l) => {
                for i in 0..n {
                    let mut s = x[i];
                    for k in 0..i {
                        s -= l[(i, k)] * x[k];
                    }
                    x[i] = s / l[(i, i)];
                }
                for i in (0..n).rev() {
                    let mut s = x[i];
                    for k in i + 1..n {
                        s -= l[(k, i)] * x[k];
                    }
                    x[i] = s / l[(i, i)];
                }
            }
            LowerFactor::Banded(l) => {
                let w = l.bw + 1;
                for i in 0..n {
                    let row = &l.data[i * w..(i + 1) * w];
                    let mut s = x[i];
                    for d in 1..=l.bw.min(i) {
                        s -= row[d] * x[i - d];
                    }
                    x[i] = s / row[0];
                }
                for i in (0..n).rev() {
                    let xi = x[i] / l.data[i * w];
                    x[i] = xi;
                    for d in 1..=l.bw.min(i) {
                        x[i - d] -= l.data[i * w + d] * xi;
                    }
                }
            }
        }
    }

    /// `Lᵀ X`, so that `‖Lᵀ x‖₂ = ‖x‖_A`.
    pub fn lt_mul(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.n;
        if x.nrows() != n {
            return Err(Error::dims("CholFactor::lt_mul", n, x.nrows()));
        }
        let mut y = DMatrix::zeros(n, x.ncols());
        for c in 0..x.ncols() {
            let xc = x.column(c);
            let mut yc = y.column_mut(c);
            match &self.lower {
                LowerFactor::Diagonal(d) => {
                    for i in 0..n {
                        yc[i] = d[i] * xc[i];
                    }
                }
                LowerFactor::Dense(l) => {
                    for i in 0..n {
                        yc[i] = (i..n).map(|k| l[(k, i)] * xc[k]).sum();
                    }
                }
                LowerFactor::Banded(l) => {
                    let w = l.bw + 1;
                    // row i of L holds l_{i, i-d}; scatter into (Lᵀx)_{i-d}
                    for i in 0..n {
                        let xi = xc[i];
                        for d in 0..=l.bw.min(i) {
                            yc[i - d] += l.data[i * w + d] * xi;
                        }
                    }
                }
            }
        }
        Ok(y)
    }

    /// `L` as a dense matrix (for tests and small problems).
    pub fn lower_dense(&self) -> DMatrix<f64> {
        match &self.lower {
            LowerFactor::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            LowerFactor::Dense(l) => l.clone(),
            LowerFactor::Banded(b) => {
                let mut m = DMatrix::zeros(self.n, self.n);
                for i in 0..self.n {
                    for d in 0..=b.bw.min(i) {
                        m[(i, i - d)] = b.data[i * (b.bw + 1) + d];
                    }
                }
                m
            }
        }
    }
}

/// Cholesky factorization of a positive definite operator.
pub fn cholesky(op: &SymOperator) -> Result<CholFactor> {
    let n = op.n();
    let lower = match op.storage() {
        Storage::Diagonal(d) => {
            let mut l = Vec::with_capacity(n);
            for (i, &v) in d.iter().enumerate() {
                if !(v > 0.0) {
                    return Err(Error::NotPositiveDefinite { pivot: i, value: v });
                }
                l.push(v.sqrt());
            }
            LowerFactor::Diagonal(l)
        }
        Storage::Dense(m) => LowerFactor::Dense(dense_cholesky(m)?),
        Storage::Banded(b) => LowerFactor::Banded(banded_cholesky(b)?),
        Storage::Csr(_) => {
            let bw = op.bandwidth();
            if n.saturating_mul(bw + 1) > MAX_BAND_ENTRIES {
                return Err(Error::Unsupported(format!(
                    "CSR Cholesky needs band storage of {n} x {} entries",
                    bw + 1
                )));
            }
            LowerFactor::Banded(banded_cholesky(&op.to_banded())?)
        }
    };
    Ok(CholFactor {
        n,
        ordering: (0..n).collect(),
        lower,
    })
}
