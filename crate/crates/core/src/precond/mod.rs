//! Preconditioners `T̃ ≈ A⁻¹` and their quality parameters.

mod ict;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrixkit::{cholesky, CholFactor, CsrUpper, InnerProduct, SymOperator};
use crate::oracle::{block_lanczos, LanczosOptions};
use crate::problems::mm_read;

pub use ict::{ic_threshold, IcFactor};

#[derive(Debug, Clone, PartialEq)]
pub enum PrecondKind {
    ExactInverse,
    IcThreshold { droptol: f64 },
    PerturbedIdentity { eta: f64, density: f64, seed: u64 },
    Identity,
    /// Inverse of a matrix read from a MatrixMarket file.
    External,
}

#[derive(Debug, Clone)]
enum Action {
    Identity,
    Solve(CholFactor),
    Ic(IcFactor),
    Multiply(SymOperator),
}

/// A symmetric positive definite `T̃`, applied to blocks, times a scale.
#[derive(Debug, Clone)]
pub struct Preconditioner {
    kind: PrecondKind,
    n: usize,
    action: Action,
    scale: f64,
}

impl Preconditioner {
    pub fn kind(&self) -> &PrecondKind {
        &self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `c · T̃`.
    pub fn scaled(&self, c: f64) -> Preconditioner {
        Preconditioner {
            scale: self.scale * c,
            ..self.clone()
        }
    }

    /// Nonzeros of the incomplete factor, for IC preconditioners.
    pub fn factor_nnz(&self) -> Option<usize> {
        match &self.action {
            Action::Ic(f) => Some(f.nnz()),
            _ => None,
        }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.n {
            return Err(Error::dims("Preconditioner::apply", self.n, x.nrows()));
        }
        let mut y = match &self.action {
            Action::Identity => x.clone(),
            Action::Solve(f) => f.solve(x)?,
            Action::Ic(f) => f.solve(x),
            Action::Multiply(op) => op.apply_unchecked(x),
        };
        if self.scale != 1.0 {
            y *= self.scale;
        }
        Ok(y)
    }
}

pub fn make_identity(n: usize) -> Preconditioner {
    Preconditioner {
        kind: PrecondKind::Identity,
        n,
        action: Action::Identity,
        scale: 1.0,
    }
}

/// `T̃ = A⁻¹` through a Cholesky factor.
pub fn make_exact_inverse(a: &SymOperator) -> Result<Preconditioner> {
    let action = if a.is_identity() {
        Action::Identity
    } else {
        Action::Solve(cholesky(a)?)
    };
    Ok(Preconditioner {
        kind: PrecondKind::ExactInverse,
        n: a.n(),
        action,
        scale: 1.0,
    })
}

/// `T̃ = (L Lᵀ)⁻¹` with `L` from incomplete Cholesky with threshold dropping.
pub fn make_ic_threshold(a: &SymOperator, droptol: f64) -> Result<Preconditioner> {
    if !(droptol > 0.0) {
        return Err(Error::Parameter(format!("drop tolerance must be positive, got {droptol}")));
    }
    Ok(Preconditioner {
        kind: PrecondKind::IcThreshold { droptol },
        n: a.n(),
        action: Action::Ic(ic_threshold(a, droptol)?),
        scale: 1.0,
    })
}

/// `T̃ = P⁻¹` for a positive definite matrix `P` stored in a MatrixMarket file.
pub fn make_external(path: impl AsRef<Path>) -> Result<Preconditioner> {
    let p = mm_read(path)?;
    Ok(Preconditioner {
        kind: PrecondKind::External,
        n: p.n(),
        action: Action::Solve(cholesky(&p)?),
        scale: 1.0,
    })
}

/// `N = I + E + Eᵀ` where `E` has `round(density · n²)` nonzeros at distinct
/// uniformly drawn positions with values uniform in `(0, eta)`.
///
/// Positive definiteness is verified by Gershgorin discs, and when those are
/// inconclusive by a Lanczos estimate of the smallest eigenvalue.
pub fn make_perturbed_identity(n: usize, eta: f64, density: Option<f64>, seed: u64) -> Result<Preconditioner> {
    let density = density.unwrap_or(5.0 / n as f64);
    if !(eta >= 0.0) || !(0.0..=1.0).contains(&density) {
        return Err(Error::Parameter(format!("need eta >= 0 and density in [0, 1], got {eta}, {density}")));
    }
    let kind = PrecondKind::PerturbedIdentity { eta, density, seed };
    if eta == 0.0 {
        return Ok(Preconditioner {
            kind,
            n,
            action: Action::Identity,
            scale: 1.0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = n * n;
    let count = ((density * total as f64).round() as usize).min(total);
    let positions = sample(&mut rng, total, count).into_vec();
    let mut trip = Vec::with_capacity(count + n);
    for i in 0..n {
        trip.push((i, i, 1.0));
    }
    for p in positions {
        let v: f64 = eta * rng.random::<f64>();
        let (r, c) = (p / n, p % n);
        let (i, j) = (r.min(c), r.max(c));
        // E + Eᵀ puts v at (r, c) and (c, r); on the diagonal that is 2v
        trip.push((i, j, if i == j { 2.0 * v } else { v }));
    }
    let op = SymOperator::csr(n, CsrUpper::from_upper_triplets(n, trip)?)?;
    check_spd(&op, eta)?;
    Ok(Preconditioner {
        kind,
        n,
        action: Action::Multiply(op),
        scale: 1.0,
    })
}

fn check_spd(op: &SymOperator, eta: f64) -> Result<()> {
    let n = op.n();
    let mut radius = vec![0.0f64; n];
    op.for_each_lower(|i, j, v| {
        if i != j {
            radius[i] += v.abs();
            radius[j] += v.abs();
        }
    });
    let diag = op.diag();
    let gersh = (0..n).map(|i| diag[i] - radius[i]).fold(f64::INFINITY, f64::min);
    if gersh > 0.0 {
        return Ok(());
    }
    let f = |x: &DMatrix<f64>| op.apply(x);
    let opts = LanczosOptions {
        tol: 1e-8,
        ..Default::default()
    };
    let low = block_lanczos(&f, InnerProduct::Identity, n, 1, false, &opts)?;
    if low.values[0] > 0.0 {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "perturbed identity is not positive definite (smallest eigenvalue {:e}); use an eta below {eta}",
            low.values[0]
        )))
    }
}

/// Extreme eigenvalues `α ≤ β` of `T̃A` and the derived optimal scaling
/// `ω = 2/(α+β)` and quality `γ = (β−α)/(β+α)`, so that `‖I − ωT̃A‖_A ≤ γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecondQuality {
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
    pub gamma: f64,
}

impl PrecondQuality {
    pub fn from_extremes(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta >= alpha) {
            return Err(Error::Precondition(format!(
                "T̃A must have a positive spectrum, got [{alpha:e}, {beta:e}]"
            )));
        }
        Ok(Self {
            alpha,
            beta,
            omega: 2.0 / (beta + alpha),
            gamma: (beta - alpha) / (beta + alpha),
        })
    }
}

/// Extreme eigenvalues of `T̃A` by Lanczos in the A-inner product, where
/// `T̃A` is self-adjoint.
pub fn assess_quality(t: &Preconditioner, a: &SymOperator) -> Result<PrecondQuality> {
    let n = a.n();
    if t.n() != n {
        return Err(Error::dims("assess_quality", n, t.n()));
    }
    let exact = matches!(t.kind, PrecondKind::ExactInverse)
        || (matches!(t.action, Action::Identity) && a.is_identity());
    if exact {
        return PrecondQuality::from_extremes(t.scale, t.scale);
    }
    let f = |x: &DMatrix<f64>| t.apply(&a.apply(x)?);
    let ip = if a.is_identity() {
        InnerProduct::Identity
    } else {
        InnerProduct::Weighted(a)
    };
    let opts = LanczosOptions {
        tol: 1e-8,
        ..Default::default()
    };
    let hi = block_lanczos(&f, ip, n, 1, true, &opts)?;
    let lo = block_lanczos(&f, ip, n, 1, false, &opts)?;
    PrecondQuality::from_extremes(lo.values[0], hi.values[0])
}

/// Dense `T̃` as a matrix (small problems and tests).
pub fn dense_matrix(t: &Preconditioner) -> Result<DMatrix<f64>> {
    t.apply(&DMatrix::identity(t.n(), t.n()))
}

/// Diagonal (Jacobi) preconditioner `diag(A)⁻¹`, used as a reference.
pub fn jacobi_inverse(a: &SymOperator) -> Result<Preconditioner> {
    let d = a.diag();
    if d.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Precondition("Jacobi preconditioner needs a positive diagonal".into()));
    }
    Ok(Preconditioner {
        kind: PrecondKind::External,
        n: a.n(),
        action: Action::Multiply(SymOperator::diagonal(DVector::from_iterator(
            a.n(),
            d.iter().map(|v| 1.0 / v),
        ))),
        scale: 1.0,
    })
}
