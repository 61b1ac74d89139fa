use nalgebra::DMatrix;

use super::at_b;
use super::jacobi::sym_eig_small;
use super::operator::SymOperator;
use crate::error::{Error, Result};

/// Inner product used to orthonormalize a block.
#[derive(Debug, Clone, Copy)]
pub enum InnerProduct<'a> {
    Identity,
    /// `⟨x, y⟩ = xᵀ A y` for a positive definite `A`.
    Weighted(&'a SymOperator),
}

impl InnerProduct<'_> {
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            InnerProduct::Identity => x.clone(),
            InnerProduct::Weighted(a) => a.apply_unchecked(x),
        }
    }

    pub fn metric(&self) -> Metric {
        match self {
            InnerProduct::Identity => Metric::Euclidean,
            InnerProduct::Weighted(_) => Metric::Weighted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    Weighted,
}

/// Column block orthonormal in a stated inner product, together with the
/// image `G B` of the basis under the metric matrix.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: DMatrix<f64>,
    gbasis: DMatrix<f64>,
    metric: Metric,
}

impl Subspace {
    pub fn empty(n: usize, metric: Metric) -> Self {
        Self {
            basis: DMatrix::zeros(n, 0),
            gbasis: DMatrix::zeros(n, 0),
            metric,
        }
    }

    /// Wraps a block the caller knows to be orthonormal; `gbasis` must be
    /// `G * basis`.
    pub fn from_parts(basis: DMatrix<f64>, gbasis: DMatrix<f64>, metric: Metric) -> Self {
        let s = Self {
            basis,
            gbasis,
            metric,
        };
        debug_assert!(
            s.gram_error() <= 1e-10 * s.dim().max(1) as f64,
            "basis not orthonormal: {:e}",
            s.gram_error()
        );
        s
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn gbasis(&self) -> &DMatrix<f64> {
        &self.gbasis
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    /// `‖Bᵀ G B − I‖_F`.
    pub fn gram_error(&self) -> f64 {
        let k = self.dim();
        (at_b(&self.basis, &self.gbasis) - DMatrix::<f64>::identity(k, k)).norm()
    }

    /// Subspace spanned by `basis * coeffs`; `coeffs` must map to an
    /// orthonormal block (e.g. orthonormal coefficient columns).
    pub fn combine(&self, coeffs: &DMatrix<f64>) -> Subspace {
        Subspace::from_parts(&self.basis * coeffs, &self.gbasis * coeffs, self.metric)
    }

    /// Sines of the principal angles between `other` and `self`, measured
    /// as the distance of `other`'s unit vectors from `span(self)`.
    ///
    /// Returns `dim(other)` values in descending order; all zero iff
    /// `span(other) ⊆ span(self)`.
    pub fn sines_to(&self, other: &Subspace) -> Result<Vec<f64>> {
        if other.metric != self.metric || other.n() != self.n() {
            return Err(Error::Precondition(
                "principal angles need subspaces of one space and metric".into(),
            ));
        }
        if other.dim() == 0 {
            return Ok(vec![]);
        }
        // residual of other's basis after G-projection onto self
        let coeff = at_b(&self.gbasis, &other.basis);
        let p = &other.basis - &self.basis * &coeff;
        let gp = &other.gbasis - &self.gbasis * &coeff;
        let gram = at_b(&p, &gp);
        let eig = sym_eig_small(&gram, None)?;
        Ok(eig.values.iter().map(|v| v.max(0.0).sqrt()).collect())
    }

    /// Largest sine of the principal angles between two subspaces of equal
    /// dimension (both directions are measured).
    pub fn distance(&self, other: &Subspace) -> Result<f64> {
        let a = self.sines_to(other)?;
        let b = other.sines_to(self)?;
        let m = a.into_iter().chain(b).fold(0.0f64, f64::max);
        if self.dim() != other.dim() {
            return Ok(1.0f64.max(m));
        }
        Ok(m)
    }
}

/// Options for [`orthonormalize`].
#[derive(Debug, Clone, Copy)]
pub struct OrthoOptions {
    /// Drop numerically dependent columns instead of failing.
    pub allow_truncation: bool,
    /// Pivot threshold on squared relative column norms; defaults to
    /// `1e-13 * n`.
    pub drop_tol: Option<f64>,
}

impl Default for OrthoOptions {
    fn default() -> Self {
        Self {
            allow_truncation: false,
            drop_tol: None,
        }
    }
}

impl OrthoOptions {
    pub fn truncating() -> Self {
        Self {
            allow_truncation: true,
            drop_tol: None,
        }
    }
}

/// Threshold above which the second Cholesky-QR pass works on a shifted Gram.
const GRAM_CONDITION_GUARD: f64 = 1e7;

/// Orthonormalizes the columns of `b` in the given inner product.
///
/// Cholesky-QR: the first pass runs an unpivoted Cholesky on the scaled
/// Gram matrix and drops columns whose pivot falls below the threshold;
/// a second pass restores orthogonality lost in the first one.
pub fn orthonormalize(b: &DMatrix<f64>, ip: InnerProduct<'_>, opts: OrthoOptions) -> Result<Subspace> {
    let gb = ip.apply(b);
    orthonormalize_with_image(b, &gb, ip, opts)
}

/// As [`orthonormalize`], with `gb = G b` supplied by the caller.
pub fn orthonormalize_with_image(
    b: &DMatrix<f64>,
    gb: &DMatrix<f64>,
    ip: InnerProduct<'_>,
    opts: OrthoOptions,
) -> Result<Subspace> {
    let n = b.nrows();
    let k = b.ncols();
    if gb.nrows() != n || gb.ncols() != k {
        return Err(Error::dims("orthonormalize", k, gb.ncols()));
    }
    let metric = ip.metric();
    let drop_tol = opts.drop_tol.unwrap_or(1e-13 * n as f64);

    // column scaling
    let mut scaled = b.clone();
    let mut gscaled = gb.clone();
    let mut norms = Vec::with_capacity(k);
    for c in 0..k {
        let nrm2 = b.column(c).dot(&gb.column(c));
        norms.push(if nrm2 > 0.0 { nrm2.sqrt() } else { 0.0 });
    }
    let max_norm = norms.iter().cloned().fold(0.0, f64::max);
    let mut nonzero = vec![true; k];
    for c in 0..k {
        if norms[c] <= f64::MIN_POSITIVE.sqrt() * max_norm.max(1.0) || norms[c] == 0.0 {
            nonzero[c] = false;
            continue;
        }
        let inv = 1.0 / norms[c];
        scaled.column_mut(c).scale_mut(inv);
        gscaled.column_mut(c).scale_mut(inv);
    }

    // pass 1: Cholesky with dropping on the scaled Gram
    let gram = symmetric_gram(&scaled, &gscaled);
    let mut kept: Vec<usize> = Vec::with_capacity(k);
    let mut l = DMatrix::<f64>::zeros(k, k);
    for c in 0..k {
        if !nonzero[c] {
            continue;
        }
        let mut d = gram[(c, c)];
        for &p in &kept {
            d -= l[(c, p)] * l[(c, p)];
        }
        if !(d > drop_tol) {
            continue;
        }
        let lcc = d.sqrt();
        l[(c, c)] = lcc;
        for r in c + 1..k {
            if !nonzero[r] {
                continue;
            }
            let mut s = gram[(r, c)];
            for &p in &kept {
                s -= l[(r, p)] * l[(c, p)];
            }
            l[(r, c)] = s / lcc;
        }
        kept.push(c);
    }
    let rank = kept.len();
    if rank < k && !opts.allow_truncation {
        return Err(Error::RankDeficient { rank, required: k });
    }
    if rank == 0 {
        return Ok(Subspace::empty(n, metric));
    }
    let r1 = DMatrix::from_fn(rank, rank, |i, j| l[(kept[j], kept[i])]);
    let bk = DMatrix::from_fn(n, rank, |i, j| scaled[(i, kept[j])]);
    let gbk = DMatrix::from_fn(n, rank, |i, j| gscaled[(i, kept[j])]);
    let mut q = right_upper_solve(&bk, &r1);
    let mut gq = right_upper_solve(&gbk, &r1);

    let diag_min = (0..rank).map(|i| r1[(i, i)]).fold(f64::INFINITY, f64::min);
    let diag_max = (0..rank).map(|i| r1[(i, i)]).fold(0.0, f64::max);
    let cond_est = (diag_max / diag_min).powi(2);

    // pass 2 (and, if needed, one more)
    for pass in 0..3 {
        let g2 = symmetric_gram(&q, &gq);
        let err = (&g2 - DMatrix::<f64>::identity(rank, rank)).norm();
        if pass > 0 && err <= 1e-13 * rank as f64 {
            break;
        }
        let shift = if pass == 0 && cond_est > GRAM_CONDITION_GUARD {
            11.0 * ((n * rank + rank * (rank + 1)) as f64) * f64::EPSILON * g2.norm()
        } else {
            0.0
        };
        let mut g2s = g2.clone();
        for i in 0..rank {
            g2s[(i, i)] += shift;
        }
        let l2 = match super::chol::dense_cholesky(&g2s) {
            Ok(l2) => l2,
            Err(_) => {
                let mut g3 = g2.clone();
                let s = 11.0 * ((n * rank + rank * (rank + 1)) as f64) * f64::EPSILON * g2.norm();
                for i in 0..rank {
                    g3[(i, i)] += s;
                }
                match super::chol::dense_cholesky(&g3) {
                    Ok(l3) => l3,
                    // a caller-supplied threshold kept a rounding-level pivot
                    Err(_) if opts.allow_truncation && opts.drop_tol.is_some() => {
                        return orthonormalize_with_image(b, gb, ip, OrthoOptions::truncating());
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        let r2 = l2.transpose();
        q = right_upper_solve(&q, &r2);
        gq = right_upper_solve(&gq, &r2);
    }
    // an ill-conditioned first pass can leave `gq` inconsistent with `G q`
    // even when the symmetrized Gram is the identity
    if opts.allow_truncation && opts.drop_tol.is_some() {
        let err = (at_b(&q, &gq) - DMatrix::<f64>::identity(rank, rank)).norm();
        if err > 1e-12 * rank as f64 {
            return orthonormalize_with_image(b, gb, ip, OrthoOptions::truncating());
        }
    }
    Ok(Subspace::from_parts(q, gq, metric))
}

fn symmetric_gram(b: &DMatrix<f64>, gb: &DMatrix<f64>) -> DMatrix<f64> {
    let g = at_b(b, gb);
    (&g + g.transpose()) * 0.5
}

/// `B R⁻¹` for upper triangular `R`.
fn right_upper_solve(b: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    let k = r.nrows();
    let mut q = b.clone();
    let data = q.as_mut_slice();
    for c in 0..k {
        let (done, rest) = data.split_at_mut(c * n);
        let col = &mut rest[..n];
        for p in 0..c {
            let f = r[(p, c)];
            if f != 0.0 {
                for (x, y) in col.iter_mut().zip(&done[p * n..(p + 1) * n]) {
                    *x -= f * y;
                }
            }
        }
        let inv = 1.0 / r[(c, c)];
        col.iter_mut().for_each(|x| *x *= inv);
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthonormal_input_unchanged_up_to_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = DMatrix::from_fn(12, 3, |_, _| rng.random_range(-1.0..1.0)).qr().q();
        let s = orthonormalize(&q, InnerProduct::Identity, OrthoOptions::default()).unwrap();
        for c in 0..3 {
            let d1 = (s.basis().column(c) - q.column(c)).amax();
            let d2 = (s.basis().column(c) + q.column(c)).amax();
            assert!(d1.min(d2) < 1e-14);
        }
    }

    #[test]
    fn gram_schmidt_by_hand() {
        let b = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let s = orthonormalize(&b, InnerProduct::Identity, OrthoOptions::default()).unwrap();
        assert!(s.gram_error() < 1e-12);
        let e12 = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let target = Subspace::from_parts(e12.clone(), e12, Metric::Euclidean);
        assert!(target.distance(&s).unwrap() < 1e-14);
    }

    #[test]
    fn weighted_normalization() {
        let a = SymOperator::diagonal(DVector::from_vec(vec![1.0, 4.0]));
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let s = orthonormalize(&b, InnerProduct::Weighted(&a), OrthoOptions::default()).unwrap();
        let v = s.basis().column(0);
        let expect = 1.0 / 5f64.sqrt();
        assert!((v[0].abs() - expect).abs() < 1e-15 && (v[1].abs() - expect).abs() < 1e-15);
    }

    #[test]
    fn tiny_drop_tol_falls_back_on_rounding_level_pivot() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 14;
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let a = SymOperator::from_dense(&(&g * g.transpose() / n as f64 + DMatrix::identity(n, n))).unwrap();
        let mut b = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
        // third column equals the sum of the first two up to rounding
        let dep = b.column(0) + b.column(1) + DVector::from_fn(n, |_, _| rng.random_range(-1e-16..1e-16));
        b.set_column(2, &dep);
        let opts = OrthoOptions {
            allow_truncation: true,
            drop_tol: Some(1e-40),
        };
        let s = orthonormalize(&b, InnerProduct::Weighted(&a), opts).unwrap();
        assert_eq!(s.dim(), 2);
        assert!(s.gram_error() < 1e-13);
    }

    #[test]
    fn rank_deficiency_reported() {
        let b = DMatrix::from_column_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        match orthonormalize(&b, InnerProduct::Identity, OrthoOptions::default()) {
            Err(Error::RankDeficient { rank, required }) => {
                assert_eq!((rank, required), (2, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
        let s = orthonormalize(&b, InnerProduct::Identity, OrthoOptions::truncating()).unwrap();
        assert_eq!(s.dim(), 2);
    }

    #[test]
    fn ill_conditioned_block_recovers_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 200;
        let base = DMatrix::from_fn(n, 4, |_, _| rng.random_range(-1.0..1.0));
        let mut b = base.clone();
        // nearly dependent column
        // Gram pivot near 1e-8, well above the drop threshold but past the condition guard
        let mut c = base.column(0).into_owned() + base.column(1) * 1e-4;
        c[3] += 1e-4;
        b.set_column(3, &c);
        let s = orthonormalize(&b, InnerProduct::Identity, OrthoOptions::default()).unwrap();
        assert_eq!(s.dim(), 4);
        assert!(s.gram_error() < 1e-13);
        // the span is preserved
        let orig = orthonormalize(&base.columns(0, 3).into_owned(), InnerProduct::Identity, OrthoOptions::default())
            .unwrap();
        let sines = s.sines_to(&orig).unwrap();
        assert!(sines[0] < 1e-8, "{sines:?} {}", s.gram_error());
    }

    #[test]
    fn weighted_block_satisfies_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (a, _) = crate::problems::gen_laplacian_rect(10, 8, 0.1, 0.1).unwrap();
        let b = DMatrix::from_fn(a.n(), 6, |_, _| rng.random_range(-1.0..1.0));
        let s = orthonormalize(&b, InnerProduct::Weighted(&a), OrthoOptions::default()).unwrap();
        let fresh = s.basis().transpose() * a.apply(s.basis()).unwrap();
        assert!((fresh - DMatrix::<f64>::identity(6, 6)).norm() <= 1e-10 * 6.0);
    }
}
