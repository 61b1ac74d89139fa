use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrixkit::{at_b, cholesky, orthonormalize_with_image, sym_eig_small, CholFactor, InnerProduct, OrthoOptions, Subspace, SymOperator};
use crate::oracle::Orientation;
use crate::problems::Problem;

/// Norm used for residual columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualNorm {
    /// `‖r‖_{A⁻¹}`; falls back to the 2-norm when `A` has no factor.
    #[default]
    AInverse,
    Euclidean,
}

/// The pair `(M, A)` together with a factor of `A` for `A⁻¹` products.
#[derive(Debug, Clone)]
pub struct Pencil {
    m: SymOperator,
    a: SymOperator,
    a_factor: Option<CholFactor>,
    norm: ResidualNorm,
}

impl Pencil {
    /// Factors `A` unless it is the identity. Matrices whose profile is too
    /// large for the banded factor get no factor and no `A⁻¹` products.
    pub fn new(m: SymOperator, a: SymOperator) -> Result<Self> {
        if m.n() != a.n() {
            return Err(Error::dims("Pencil::new", a.n(), m.n()));
        }
        let a_factor = if a.is_identity() {
            None
        } else {
            match cholesky(&a) {
                Ok(f) => Some(f),
                Err(Error::Unsupported(_)) => None,
                Err(e) => return Err(e),
            }
        };
        Ok(Self {
            m,
            a,
            a_factor,
            norm: ResidualNorm::AInverse,
        })
    }

    pub fn from_problem(p: &Problem) -> Result<Self> {
        Self::new(p.m.clone(), p.a.clone())
    }

    pub fn with_norm(mut self, norm: ResidualNorm) -> Self {
        self.norm = norm;
        self
    }

    pub fn m(&self) -> &SymOperator {
        &self.m
    }

    pub fn a(&self) -> &SymOperator {
        &self.a
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn can_solve(&self) -> bool {
        self.a.is_identity() || self.a_factor.is_some()
    }

    /// `A⁻¹ X`.
    pub fn solve_a(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if self.a.is_identity() {
            return Ok(x.clone());
        }
        match &self.a_factor {
            Some(f) => f.solve(x),
            None => Err(Error::Unsupported("A has no factor; A⁻¹ products unavailable".into())),
        }
    }

    /// `Lᵀ X` with `L Lᵀ = A`, so that `‖Lᵀ x‖₂ = ‖x‖_A`.
    pub fn a_half(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if self.a.is_identity() {
            return Ok(x.clone());
        }
        match &self.a_factor {
            Some(f) => f.lt_mul(x),
            None => Err(Error::Unsupported("A has no factor; A-norms of blocks unavailable".into())),
        }
    }

    /// `(M − σA, A)`, sharing the factor of `A`.
    pub fn shifted(&self, sigma: f64) -> Result<Pencil> {
        Ok(Pencil {
            m: self.m.combine(1.0, &self.a, -sigma)?,
            ..self.clone()
        })
    }

    fn norms(&self, r: &DMatrix<f64>) -> Result<Vec<f64>> {
        let k = r.ncols();
        if self.norm == ResidualNorm::AInverse && self.can_solve() {
            let z = self.solve_a(r)?;
            Ok((0..k).map(|c| r.column(c).dot(&z.column(c)).max(0.0).sqrt()).collect())
        } else {
            Ok((0..k).map(|c| r.column(c).norm()).collect())
        }
    }
}

/// Ritz pairs of `(M, A)` in a subspace.
#[derive(Debug, Clone)]
pub struct RitzSet {
    /// `θ₁ ≥ … ≥ θ_s`.
    pub values: Vec<f64>,
    /// A-orthonormal Ritz vectors `V`.
    pub vectors: Subspace,
    /// `M V`.
    pub mv: DMatrix<f64>,
    /// `R_V = M V − A V Θ`.
    pub residual: DMatrix<f64>,
    pub residual_norms: Vec<f64>,
}

impl RitzSet {
    pub fn s(&self) -> usize {
        self.values.len()
    }

    pub fn v(&self) -> &DMatrix<f64> {
        self.vectors.basis()
    }

    /// `A V`.
    pub fn av(&self) -> &DMatrix<f64> {
        self.vectors.gbasis()
    }

    /// Ritz values in the requested orientation: `θ` descending, or
    /// `ϑ = 1/θ` ascending for the reversed pair.
    pub fn ordered(&self, orientation: Orientation) -> Vec<f64> {
        match orientation {
            Orientation::LargestMu => self.values.clone(),
            Orientation::SmallestLambda => self.values.iter().map(|t| 1.0 / t).collect(),
        }
    }
}

/// `RR[M, A, s]` on the span of `trial`.
///
/// The trial block is A-orthonormalized with rank truncation (Cholesky-QR
/// pivots below `1e-13·n` are dropped) and the `s` largest Ritz pairs of
/// the projected pair `(BᵀMB, I)` are returned.
pub fn rayleigh_ritz(trial: &DMatrix<f64>, pencil: &Pencil, s: usize) -> Result<RitzSet> {
    if trial.nrows() != pencil.n() {
        return Err(Error::dims("rayleigh_ritz", pencil.n(), trial.nrows()));
    }
    let atrial = pencil.a.apply_unchecked(trial);
    let basis = orthonormalize_with_image(trial, &atrial, InnerProduct::Weighted(&pencil.a), OrthoOptions::truncating())?;
    if basis.dim() < s {
        return Err(Error::RankDeficient {
            rank: basis.dim(),
            required: s,
        });
    }
    ritz_in(&basis, pencil, s)
}

/// `RR[M, A, s]` on an A-orthonormal basis.
pub fn ritz_in(basis: &Subspace, pencil: &Pencil, s: usize) -> Result<RitzSet> {
    if basis.dim() < s {
        return Err(Error::RankDeficient {
            rank: basis.dim(),
            required: s,
        });
    }
    let b = basis.basis();
    let mb = pencil.m.apply_unchecked(b);
    let proj = at_b(b, &mb);
    let eig = sym_eig_small(&proj, None)?;
    let c = eig.vectors.columns(0, s).into_owned();
    let values = eig.values[..s].to_vec();
    let vectors = basis.combine(&c);
    let mv = mb * &c;
    let mut residual = mv.clone();
    for j in 0..s {
        residual.column_mut(j).axpy(-values[j], &vectors.gbasis().column(j), 1.0);
    }
    let residual_norms = pencil.norms(&residual)?;
    Ok(RitzSet {
        values,
        vectors,
        mv,
        residual,
        residual_norms,
    })
}
