use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// What is known about the sign of the spectrum of an operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    PositiveDefinite,
    Indefinite,
    Unknown,
}

/// Upper triangle (diagonal included) of a symmetric matrix in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrUpper {
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

/// Lower band of a symmetric banded matrix.
///
/// Row `i` holds the entries `a[i, i - d]` for `d = 0..=bw` at
/// `data[i * (bw + 1) + d]`; positions with `i < d` are padding and stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedLower {
    pub n: usize,
    pub bw: usize,
    pub data: Vec<f64>,
}

impl BandedLower {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let d = i - j;
        if d > self.bw {
            0.0
        } else {
            self.data[i * (self.bw + 1) + d]
        }
    }

    /// Sets `a[i, j]` for `i >= j`, `i - j <= bw`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i >= j && i - j <= self.bw);
        self.data[i * (self.bw + 1) + (i - j)] = v;
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)]
    }

    fn apply_column(&self, x: &[f64], y: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let row = &self.data[i * w..(i + 1) * w];
            let xi = x[i];
            let mut acc = row[0] * xi;
            let dmax = self.bw.min(i);
            for d in 1..=dmax {
                let a = row[d];
                if a != 0.0 {
                    let j = i - d;
                    acc += a * x[j];
                    y[j] += a * xi;
                }
            }
            y[i] += acc;
        }
    }
}

impl CsrUpper {
    fn apply_column(&self, x: &[f64], y: &mut [f64]) {
        let n = self.row_ptr.len() - 1;
        for i in 0..n {
            let xi = x[i];
            let mut acc = 0.0;
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[idx];
                let v = self.values[idx];
                acc += v * x[j];
                if j != i {
                    y[j] += v * xi;
                }
            }
            y[i] += acc;
        }
    }

    /// Builds the structure from `(row, col, value)` triplets of the upper
    /// triangle; duplicate positions are summed.
    pub fn from_upper_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(i, j, _) in &triplets {
            if i > j || j >= n {
                return Err(Error::Parameter(format!(
                    "triplet ({i}, {j}) is not in the upper triangle of a {n}x{n} matrix"
                )));
            }
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            row_ptr,
            col_idx,
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    /// Full symmetric matrix, built from its lower triangle.
    Dense(DMatrix<f64>),
    Diagonal(DVector<f64>),
    Csr(CsrUpper),
    Banded(BandedLower),
}

/// A real symmetric matrix in one of several storage formats.
#[derive(Debug, Clone, PartialEq)]
pub struct SymOperator {
    n: usize,
    storage: Storage,
    definiteness: Definiteness,
}

impl SymOperator {
    pub fn identity(n: usize) -> Self {
        Self::diagonal(DVector::from_element(n, 1.0)).with_hint(Definiteness::PositiveDefinite)
    }

    pub fn diagonal(d: DVector<f64>) -> Self {
        let hint = if d.iter().all(|&v| v > 0.0) {
            Definiteness::PositiveDefinite
        } else {
            Definiteness::Unknown
        };
        Self {
            n: d.len(),
            storage: Storage::Diagonal(d),
            definiteness: hint,
        }
    }

    /// Symmetric matrix from the lower triangle of `m` (the strict upper
    /// triangle is ignored).
    pub fn from_lower(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::dims("SymOperator::from_lower", m.nrows(), m.ncols()));
        }
        let n = m.nrows();
        let mut full = m.clone();
        for j in 0..n {
            for i in 0..j {
                full[(i, j)] = m[(j, i)];
            }
        }
        Ok(Self {
            n,
            storage: Storage::Dense(full),
            definiteness: Definiteness::Unknown,
        })
    }

    /// Dense symmetric matrix; rejects inputs that are not symmetric to
    /// within `1e-14` relative to the largest entry.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::dims("SymOperator::from_dense", m.nrows(), m.ncols()));
        }
        let scale = m.amax();
        let asym = (m - m.transpose()).amax();
        if asym > 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Parameter(format!(
                "matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        Self::from_lower(m)
    }

    pub fn csr(n: usize, csr: CsrUpper) -> Result<Self> {
        if csr.row_ptr.len() != n + 1 {
            return Err(Error::dims("SymOperator::csr", n + 1, csr.row_ptr.len()));
        }
        for i in 0..n {
            let cols = &csr.col_idx[csr.row_ptr[i]..csr.row_ptr[i + 1]];
            if cols.first().is_some_and(|&j| j < i) || cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Parameter(format!(
                    "row {i}: column indices must be strictly increasing and >= row"
                )));
            }
            if cols.last().is_some_and(|&j| j >= n) {
                return Err(Error::Parameter(format!("row {i}: column index out of range")));
            }
        }
        Ok(Self {
            n,
            storage: Storage::Csr(csr),
            definiteness: Definiteness::Unknown,
        })
    }

    pub fn banded(band: BandedLower) -> Self {
        Self {
            n: band.n,
            storage: Storage::Banded(band),
            definiteness: Definiteness::Unknown,
        }
    }

    pub fn with_hint(mut self, hint: Definiteness) -> Self {
        self.definiteness = hint;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn definiteness(&self) -> Definiteness {
        self.definiteness
    }

    pub fn is_identity(&self) -> bool {
        matches!(&self.storage, Storage::Diagonal(d) if d.iter().all(|&v| v == 1.0))
    }

    /// `self * x` for a block of columns.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.n {
            return Err(Error::dims("SymOperator::apply", self.n, x.nrows()));
        }
        if x.ncols() == 0 {
            return Err(Error::Precondition("apply needs at least one column".into()));
        }
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n;
        let k = x.ncols();
        match &self.storage {
            Storage::Dense(m) => m * x,
            Storage::Diagonal(d) => {
                let mut y = x.clone();
                for c in 0..k {
                    for i in 0..n {
                        y[(i, c)] *= d[i];
                    }
                }
                y
            }
            Storage::Csr(csr) => {
                let mut y = DMatrix::zeros(n, k);
                for c in 0..k {
                    let xs = &x.as_slice()[c * n..(c + 1) * n];
                    let ys = &mut y.as_mut_slice()[c * n..(c + 1) * n];
                    csr.apply_column(xs, ys);
                }
                y
            }
            Storage::Banded(b) => {
                let mut y = DMatrix::zeros(n, k);
                for c in 0..k {
                    let xs = &x.as_slice()[c * n..(c + 1) * n];
                    let ys = &mut y.as_mut_slice()[c * n..(c + 1) * n];
                    b.apply_column(xs, ys);
                }
                y
            }
        }
    }

    pub fn apply_vec(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let m = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        let y = self.apply(&m)?;
        Ok(DVector::from_column_slice(y.as_slice()))
    }

    /// Entry `(i, j)` of the symmetric matrix.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(m) => m[(i, j)],
            Storage::Diagonal(d) => {
                if i == j {
                    d[i]
                } else {
                    0.0
                }
            }
            Storage::Csr(csr) => {
                let (r, c) = if i <= j { (i, j) } else { (j, i) };
                let cols = &csr.col_idx[csr.row_ptr[r]..csr.row_ptr[r + 1]];
                match cols.binary_search(&c) {
                    Ok(pos) => csr.values[csr.row_ptr[r] + pos],
                    Err(_) => 0.0,
                }
            }
            Storage::Banded(b) => b.get(i, j),
        }
    }

    pub fn diag(&self) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| self.entry(i, i))
    }

    /// Visits every stored entry `(i, j, v)` of the lower triangle (`i >= j`).
    pub fn for_each_lower(&self, mut f: impl FnMut(usize, usize, f64)) {
        match &self.storage {
            Storage::Dense(m) => {
                for j in 0..self.n {
                    for i in j..self.n {
                        if m[(i, j)] != 0.0 {
                            f(i, j, m[(i, j)]);
                        }
                    }
                }
            }
            Storage::Diagonal(d) => {
                for (i, &v) in d.iter().enumerate() {
                    if v != 0.0 {
                        f(i, i, v);
                    }
                }
            }
            Storage::Csr(csr) => {
                for r in 0..self.n {
                    for idx in csr.row_ptr[r]..csr.row_ptr[r + 1] {
                        f(csr.col_idx[idx], r, csr.values[idx]);
                    }
                }
            }
            Storage::Banded(b) => {
                for i in 0..self.n {
                    let row = b.row(i);
                    for d in 0..=b.bw.min(i) {
                        if row[d] != 0.0 {
                            f(i, i - d, row[d]);
                        }
                    }
                }
            }
        }
    }

    pub fn max_abs_entry(&self) -> f64 {
        let mut m = 0.0f64;
        self.for_each_lower(|_, _, v| m = m.max(v.abs()));
        m
    }

    /// Largest `|i - j|` over stored nonzeros.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        self.for_each_lower(|i, j, _| bw = bw.max(i - j));
        bw
    }

    pub fn nnz_lower(&self) -> usize {
        let mut c = 0;
        self.for_each_lower(|_, _, _| c += 1);
        c
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        self.for_each_lower(|i, j, v| {
            m[(i, j)] = v;
            m[(j, i)] = v;
        });
        m
    }

    /// Copy of the same matrix in banded storage.
    pub fn to_banded(&self) -> BandedLower {
        let bw = self.bandwidth();
        let mut b = BandedLower::zeros(self.n, bw);
        self.for_each_lower(|i, j, v| b.set(i, j, v));
        b
    }

    /// `alpha * self + beta * other`, kept in the cheapest common storage.
    pub fn combine(&self, alpha: f64, other: &SymOperator, beta: f64) -> Result<SymOperator> {
        if other.n != self.n {
            return Err(Error::dims("SymOperator::combine", self.n, other.n));
        }
        match (&self.storage, &other.storage) {
            (Storage::Diagonal(a), Storage::Diagonal(b)) => {
                Ok(SymOperator::diagonal(a * alpha + b * beta))
            }
            (Storage::Dense(_), _) | (_, Storage::Dense(_)) => {
                SymOperator::from_lower(&(self.to_dense() * alpha + other.to_dense() * beta))
            }
            (Storage::Csr(_), _) | (_, Storage::Csr(_)) => {
                let mut trip = Vec::with_capacity(self.nnz_lower() + other.nnz_lower());
                self.for_each_lower(|i, j, v| trip.push((j, i, alpha * v)));
                other.for_each_lower(|i, j, v| trip.push((j, i, beta * v)));
                SymOperator::csr(self.n, CsrUpper::from_upper_triplets(self.n, trip)?)
            }
            _ => {
                let bw = self.bandwidth().max(other.bandwidth());
                let mut b = BandedLower::zeros(self.n, bw);
                self.for_each_lower(|i, j, v| b.set(i, j, alpha * v));
                other.for_each_lower(|i, j, v| {
                    let cur = b.get(i, j);
                    b.set(i, j, cur + beta * v)
                });
                Ok(SymOperator::banded(b))
            }
        }
    }

    pub fn scaled(&self, c: f64) -> SymOperator {
        let storage = match &self.storage {
            Storage::Dense(m) => Storage::Dense(m * c),
            Storage::Diagonal(d) => Storage::Diagonal(d * c),
            Storage::Csr(csr) => Storage::Csr(CsrUpper {
                values: csr.values.iter().map(|v| v * c).collect(),
                ..csr.clone()
            }),
            Storage::Banded(b) => Storage::Banded(BandedLower {
                data: b.data.iter().map(|v| v * c).collect(),
                ..b.clone()
            }),
        };
        let definiteness = if c > 0.0 {
            self.definiteness
        } else {
            Definiteness::Unknown
        };
        SymOperator {
            n: self.n,
            storage,
            definiteness,
        }
    }
}
