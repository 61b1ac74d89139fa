//! Reference eigenvalues and eigenvectors of a pair `(M, A)`.

mod lanczos;

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrixkit::{cholesky, sym_eig_small, InnerProduct, Metric, Storage, Subspace, SymOperator};
use crate::problems::Problem;

pub use lanczos::{block_lanczos, LanczosOptions, LanczosResult};

/// Largest dimension handled by [`dense_reference`].
pub const DENSE_LIMIT: usize = 2000;

/// Leading part of the spectrum `μ₁ ≥ μ₂ ≥ …` of `(M, A)` plus `μ_n`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Leading eigenvalues, non-increasing.
    pub values: Vec<f64>,
    /// A-orthonormal eigenvectors for the leading `values`, when computed.
    pub vectors: Option<Subspace>,
    /// `‖M w − μ A w‖ / ‖A w‖` per leading pair.
    pub residuals: Vec<f64>,
    /// Problem dimension.
    pub n: usize,
    /// Smallest eigenvalue `μ_n`.
    pub mu_min: f64,
}

impl Spectrum {
    /// `μ_i` for `1 ≤ i ≤ n`, available for the leading values and for `i = n`.
    pub fn mu(&self, i: usize) -> Result<f64> {
        if i >= 1 && i <= self.values.len() {
            Ok(self.values[i - 1])
        } else if i == self.n && i >= 1 {
            Ok(self.mu_min)
        } else {
            Err(Error::Precondition(format!(
                "eigenvalue μ_{i} not available (computed {} of {})",
                self.values.len(),
                self.n
            )))
        }
    }

    /// Eigenvalue `λ_i = 1/μ_i` of the reversed pair `(A, M)` in ascending order.
    pub fn lambda(&self, i: usize) -> Result<f64> {
        Ok(1.0 / self.mu(i)?)
    }

    /// Values in the requested order.
    pub fn ordered(&self, orientation: Orientation) -> Vec<f64> {
        match orientation {
            Orientation::LargestMu => self.values.clone(),
            Orientation::SmallestLambda => self.values.iter().map(|m| 1.0 / m).collect(),
        }
    }

    /// A-orthonormal eigenvectors `w_from, …, w_to` (1-based, inclusive);
    /// empty when `from > to`.
    pub fn eigvecs(&self, from: usize, to: usize) -> Result<Subspace> {
        let v = self
            .vectors
            .as_ref()
            .ok_or_else(|| Error::Precondition("spectrum has no eigenvectors".into()))?;
        if from > to {
            return Ok(Subspace::empty(v.n(), v.metric()));
        }
        if from == 0 || to > v.dim() {
            return Err(Error::Precondition(format!(
                "eigenvectors {from}..={to} requested, {} available",
                v.dim()
            )));
        }
        let k = to - from + 1;
        Ok(Subspace::from_parts(
            v.basis().columns(from - 1, k).into_owned(),
            v.gbasis().columns(from - 1, k).into_owned(),
            v.metric(),
        ))
    }

    /// Spectrum of `(M − σA, A)`.
    pub fn shifted(&self, sigma: f64) -> Spectrum {
        Spectrum {
            values: self.values.iter().map(|m| m - sigma).collect(),
            mu_min: self.mu_min - sigma,
            ..self.clone()
        }
    }

    /// `index,value,residual` with 1-based indices; the `μ_n` row carries an
    /// empty residual when it was not certified.
    pub fn write_csv(&self, path: impl AsRef<Path>, header: &str) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for line in header.lines() {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "index,value,residual")?;
        for (i, v) in self.values.iter().enumerate() {
            let r = self.residuals.get(i).map(|r| format!("{r:e}")).unwrap_or_default();
            writeln!(w, "{},{:.17e},{}", i + 1, v, r)?;
        }
        if self.values.len() < self.n {
            writeln!(w, "{},{:.17e},", self.n, self.mu_min)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Largest `μ` of `(M, A)`, descending.
    LargestMu,
    /// Smallest `λ = 1/μ` of `(A, M)`, ascending.
    SmallestLambda,
}

/// Which end of the spectrum to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    Largest,
    Smallest,
}

fn certificates(m: &SymOperator, a: &SymOperator, values: &[f64], w: &DMatrix<f64>) -> Vec<f64> {
    if w.ncols() == 0 {
        return vec![];
    }
    let mw = m.apply_unchecked(w);
    let aw = a.apply_unchecked(w);
    (0..w.ncols())
        .map(|j| {
            let r = mw.column(j) - aw.column(j) * values[j];
            r.norm() / aw.column(j).norm()
        })
        .collect()
}

/// Full spectrum of `(M, A)` by Cholesky reduction and Jacobi rotations.
pub fn dense_reference(m: &SymOperator, a: &SymOperator) -> Result<Spectrum> {
    let n = a.n();
    if m.n() != n {
        return Err(Error::dims("dense_reference", n, m.n()));
    }
    if n > DENSE_LIMIT {
        return Err(Error::Unsupported(format!("dense reference limited to n <= {DENSE_LIMIT}")));
    }
    let eig = sym_eig_small(&m.to_dense(), Some(&a.to_dense()))?;
    let gv = a.apply_unchecked(&eig.vectors);
    let residuals = certificates(m, a, &eig.values, &eig.vectors);
    Ok(Spectrum {
        mu_min: *eig.values.last().unwrap(),
        values: eig.values,
        vectors: Some(Subspace::from_parts(eig.vectors, gv, Metric::Weighted)),
        residuals,
        n,
    })
}

/// Exact spectrum of a pair of diagonal matrices, with the leading `k`
/// eigenvectors (scaled unit vectors).
pub fn diagonal_reference(m: &SymOperator, a: &SymOperator, k: usize) -> Result<Spectrum> {
    let (Storage::Diagonal(dm), Storage::Diagonal(da)) = (m.storage(), a.storage()) else {
        return Err(Error::Precondition("diagonal_reference needs diagonal M and A".into()));
    };
    let n = dm.len();
    if da.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NotPositiveDefinite {
            pivot: da.iter().position(|&v| !(v > 0.0)).unwrap(),
            value: da.iter().cloned().find(|&v| !(v > 0.0)).unwrap(),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mu: Vec<f64> = (0..n).map(|i| dm[i] / da[i]).collect();
    order.sort_by(|&x, &y| mu[y].total_cmp(&mu[x]));
    let k = k.min(n);
    let values: Vec<f64> = order[..k].iter().map(|&i| mu[i]).collect();
    let mut basis = DMatrix::zeros(n, k);
    let mut gbasis = DMatrix::zeros(n, k);
    for (c, &i) in order[..k].iter().enumerate() {
        basis[(i, c)] = 1.0 / da[i].sqrt();
        gbasis[(i, c)] = da[i].sqrt();
    }
    let residuals = certificates(m, a, &values, &basis);
    Ok(Spectrum {
        values,
        vectors: Some(Subspace::from_parts(basis, gbasis, Metric::Weighted)),
        residuals,
        n,
        mu_min: mu[*order.last().unwrap()],
    })
}

/// Extreme eigenpairs of a single symmetric operator (Euclidean metric).
pub fn lanczos_extreme(op: &SymOperator, k: usize, end: End, opts: &LanczosOptions) -> Result<LanczosResult> {
    let f = |x: &DMatrix<f64>| op.apply(x);
    block_lanczos(&f, InnerProduct::Identity, op.n(), k, end == End::Largest, opts)
}

/// Smallest eigenpairs of a positive definite operator, found as the
/// largest of `A⁻¹` applied through a Cholesky factor. Values ascending.
pub fn lanczos_solve(op: &SymOperator, k: usize, opts: &LanczosOptions) -> Result<LanczosResult> {
    let f = cholesky(op)?;
    let apply = |x: &DMatrix<f64>| f.solve(x);
    let mut r = block_lanczos(&apply, InnerProduct::Identity, op.n(), k, true, opts)?;
    r.values = r.values.iter().map(|v| 1.0 / v).collect();
    Ok(r)
}

/// Extreme eigenpairs of `(M, A)`: Lanczos on `A⁻¹M` in the A-inner product.
/// Eigenvectors come out A-orthonormal.
pub fn lanczos_pencil(
    m: &SymOperator,
    a: &SymOperator,
    k: usize,
    end: End,
    opts: &LanczosOptions,
) -> Result<LanczosResult> {
    let n = a.n();
    if m.n() != n {
        return Err(Error::dims("lanczos_pencil", n, m.n()));
    }
    let f = cholesky(a)?;
    let apply = |x: &DMatrix<f64>| f.solve(&m.apply_unchecked(x));
    block_lanczos(&apply, InnerProduct::Weighted(a), n, k, end == End::Largest, opts)
}

/// Reference spectrum with the leading `k` eigenpairs of a problem and `μ_n`.
///
/// Diagonal pairs are handled exactly, small pairs densely, larger pairs by
/// Lanczos on `A⁻¹M` (leading part) and on `A` or the pencil (for `μ_n`).
pub fn reference_spectrum(problem: &Problem, k: usize) -> Result<Spectrum> {
    let (m, a) = (&problem.m, &problem.a);
    let n = a.n();
    if matches!((m.storage(), a.storage()), (Storage::Diagonal(_), Storage::Diagonal(_))) {
        return diagonal_reference(m, a, k);
    }
    if n <= 400 {
        let mut s = dense_reference(m, a)?;
        let k = k.min(n);
        s.values.truncate(k);
        s.residuals.truncate(k);
        let v = s.vectors.take().unwrap();
        s.vectors = Some(Subspace::from_parts(
            v.basis().columns(0, k).into_owned(),
            v.gbasis().columns(0, k).into_owned(),
            Metric::Weighted,
        ));
        return Ok(s);
    }
    let opts = LanczosOptions {
        block: Some(4),
        ..Default::default()
    };
    let lead = lanczos_pencil(m, a, k, End::Largest, &opts)?;
    let mu_min = if m.is_identity() {
        let top = lanczos_extreme(
            a,
            1,
            End::Largest,
            &LanczosOptions {
                tol: 1e-9,
                ..Default::default()
            },
        )?;
        1.0 / top.values[0]
    } else {
        lanczos_pencil(m, a, 1, End::Smallest, &LanczosOptions { tol: 1e-9, ..opts })?.values[0]
    };
    let residuals = certificates(m, a, &lead.values, lead.vectors.basis());
    Ok(Spectrum {
        values: lead.values,
        vectors: Some(lead.vectors),
        residuals,
        n,
        mu_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{gen_laplacian_rect, ProblemKind, ProblemSpec};
    use nalgebra::DVector;

    #[test]
    fn dense_diagonal_pair() {
        let m = SymOperator::diagonal(DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let s = dense_reference(&m, &SymOperator::identity(3)).unwrap();
        assert_eq!(s.values.len(), 3);
        for (v, e) in s.values.iter().zip([3.0, 2.0, 1.0]) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn dense_one_dimensional_laplacian() {
        let mut t = DMatrix::zeros(10, 10);
        for i in 0..10 {
            t[(i, i)] = 2.0;
            if i > 0 {
                t[(i, i - 1)] = -1.0;
                t[(i - 1, i)] = -1.0;
            }
        }
        let s = dense_reference(&SymOperator::from_dense(&t).unwrap(), &SymOperator::identity(10)).unwrap();
        for (idx, v) in s.values.iter().enumerate() {
            let kk = (10 - idx) as f64;
            let exact = 2.0 - 2.0 * (kk * std::f64::consts::PI / 11.0).cos();
            assert!((v - exact).abs() < 1e-12);
        }
        assert!(s.residuals.iter().all(|&r| r < 1e-12));
    }

    #[test]
    fn diagonal_reference_matches_definition() {
        let p = ProblemSpec::new(ProblemKind::DiagCluster { n: 100 }).build().unwrap();
        let s = reference_spectrum(&p, 8).unwrap();
        let exact = p.exact_mu.unwrap();
        assert_eq!(&s.values[..], &exact[..8]);
        assert_eq!(s.mu_min, 1.0);
        assert_eq!(s.mu(100).unwrap(), 1.0);
        assert!(s.mu(50).is_err());
        assert!(s.vectors.as_ref().unwrap().gram_error() == 0.0);
    }

    #[test]
    fn solve_mode_rectangle_matches_closed_form() {
        let (a, lambda) = gen_laplacian_rect(20, 11, 1.0 / 21.0, 1.0 / 12.0).unwrap();
        let r = lanczos_solve(&a, 5, &Default::default()).unwrap();
        for (v, e) in r.values.iter().zip(&lambda) {
            assert!((v - e).abs() <= 1e-10 * e, "{v} vs {e}");
        }
    }

    #[test]
    fn pencil_vectors_are_a_orthonormal() {
        let (a, lambda) = gen_laplacian_rect(15, 12, 0.1, 0.1).unwrap();
        let m = SymOperator::identity(a.n());
        let r = lanczos_pencil(&m, &a, 4, End::Largest, &Default::default()).unwrap();
        let v = r.vectors.basis();
        let gram = v.transpose() * a.apply(v).unwrap();
        assert!((gram - DMatrix::<f64>::identity(4, 4)).norm() < 1e-10 * 4.0);
        for (mu, l) in r.values.iter().zip(&lambda) {
            assert!((1.0 / mu - l).abs() <= 1e-10 * l);
        }
        let cert = certificates(&m, &a, &r.values, v);
        assert!(cert.iter().all(|&c| c <= 1e-10));
    }
}
