//! Test problem generators and matrix file I/O.

mod mm;

use std::path::PathBuf;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::matrixkit::{BandedLower, Definiteness, SymOperator};

pub use mm::{mm_read, mm_write};

/// A matrix pair `(M, A)` with `A` positive definite.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub m: SymOperator,
    pub a: SymOperator,
    /// Eigenvalues `μ` of the pair in descending order, when known in closed form.
    pub exact_mu: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemKind {
    /// Diagonal `M` with a cluster of six leading eigenvalues, `A = I`.
    DiagCluster { n: usize },
    /// `(I, A)` with `A` the Laplacian on the slit rectangle, mesh size `1/m`.
    LapSlit { m: usize },
    /// `(I, A)` with `A` the Laplacian on a rectangle grid.
    LapRect {
        nx: usize,
        ny: usize,
        hx: f64,
        hy: f64,
    },
    /// Pair read from MatrixMarket files; `M = I` when `m` is absent.
    File { m: Option<PathBuf>, a: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// None of the built-in generators is randomized; kept so that every
    /// spec carries the seed it was run with.
    pub seed: u64,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind) -> Self {
        Self { kind, seed: 0 }
    }

    pub fn build(&self) -> Result<Problem> {
        match &self.kind {
            ProblemKind::DiagCluster { n } => {
                let (m, a) = gen_diag_cluster(*n)?;
                let mu = diag_cluster_values(*n);
                Ok(Problem {
                    name: format!("diag-cluster(n={n})"),
                    m,
                    a,
                    exact_mu: Some(mu),
                })
            }
            ProblemKind::LapSlit { m } => {
                let a = gen_laplacian_slit_m(*m)?;
                Ok(Problem {
                    name: format!("lap-slit(h=1/{m})"),
                    m: SymOperator::identity(a.n()),
                    a,
                    exact_mu: None,
                })
            }
            ProblemKind::LapRect { nx, ny, hx, hy } => {
                let (a, lambda) = gen_laplacian_rect(*nx, *ny, *hx, *hy)?;
                Ok(Problem {
                    name: format!("lap-rect({nx}x{ny})"),
                    m: SymOperator::identity(a.n()),
                    a,
                    exact_mu: Some(lambda.iter().map(|l| 1.0 / l).collect()),
                })
            }
            ProblemKind::File { m, a } => {
                let a = mm_read(a)?.with_hint(Definiteness::PositiveDefinite);
                let m = match m {
                    Some(p) => mm_read(p)?,
                    None => SymOperator::identity(a.n()),
                };
                if m.n() != a.n() {
                    return Err(Error::dims("file problem", a.n(), m.n()));
                }
                Ok(Problem {
                    name: "file".into(),
                    m,
                    a,
                    exact_mu: None,
                })
            }
        }
    }
}

fn diag_cluster_values(n: usize) -> Vec<f64> {
    let tail = (n - 7) as f64;
    (1..=n)
        .map(|i| {
            if i <= 6 {
                10.07 - 0.01 * i as f64
            } else {
                9.0 - 8.0 * (i - 7) as f64 / tail
            }
        })
        .collect()
}

/// `M = diag(μ)` with `μ_i = 10.07 − 0.01 i` for `i ≤ 6` and the remaining
/// values equidistant from 9 down to 1 (both attained); `A = I`.
pub fn gen_diag_cluster(n: usize) -> Result<(SymOperator, SymOperator)> {
    if n < 8 {
        return Err(Error::Parameter(format!("diag-cluster needs n >= 8, got {n}")));
    }
    let m = SymOperator::diagonal(DVector::from_vec(diag_cluster_values(n)));
    Ok((m, SymOperator::identity(n)))
}

/// Number of intervals `1/h`, rejecting mesh sizes whose reciprocal is not
/// an integer.
pub fn intervals_from_h(h: f64) -> Result<usize> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Parameter(format!("mesh size must be positive, got {h}")));
    }
    let m = (1.0 / h).round();
    if m < 1.0 || ((m * h) - 1.0).abs() > 1e-12 {
        return Err(Error::Parameter(format!("1/h must be an integer, got h = {h}")));
    }
    Ok(m as usize)
}

/// Five-point Laplacian on `[0,2]×[0,1]` with the slit `{1}×[0.1,0.9]`,
/// homogeneous Dirichlet conditions, mesh size `h`.
pub fn gen_laplacian_slit(h: f64) -> Result<SymOperator> {
    gen_laplacian_slit_m(intervals_from_h(h)?)
}

/// Slit membership of interior node `(k, l)` (coordinates `(k/m, l/m)`),
/// decided in integers: `x = 1` and `0.1 ≤ y ≤ 0.9`.
fn on_slit(k: usize, l: usize, m: usize) -> bool {
    k == m && 10 * l >= m && 10 * l <= 9 * m
}

/// As [`gen_laplacian_slit`] with `m = 1/h` intervals per unit length.
///
/// Unknowns are numbered column by column: `x` index major, `y` index minor,
/// so the band width is at most `m − 1`.
pub fn gen_laplacian_slit_m(m: usize) -> Result<SymOperator> {
    if m < 2 {
        return Err(Error::Parameter(format!("1/h must be at least 2, got {m}")));
    }
    let nxi = 2 * m - 1;
    let nyi = m - 1;
    let mut index = vec![usize::MAX; nxi * nyi];
    let mut n = 0;
    for k in 1..=nxi {
        for l in 1..=nyi {
            if !on_slit(k, l, m) {
                index[(k - 1) * nyi + (l - 1)] = n;
                n += 1;
            }
        }
    }
    let scale = (m * m) as f64;
    let id = |k: usize, l: usize| -> Option<usize> {
        if k == 0 || l == 0 || k > nxi || l > nyi {
            return None;
        }
        let v = index[(k - 1) * nyi + (l - 1)];
        (v != usize::MAX).then_some(v)
    };
    let mut bw = 0;
    for k in 1..=nxi {
        for l in 1..=nyi {
            if let Some(i) = id(k, l) {
                for j in [id(k - 1, l), id(k, l - 1)].into_iter().flatten() {
                    bw = bw.max(i - j);
                }
            }
        }
    }
    let mut band = BandedLower::zeros(n, bw);
    for k in 1..=nxi {
        for l in 1..=nyi {
            if let Some(i) = id(k, l) {
                band.set(i, i, 4.0 * scale);
                for j in [id(k - 1, l), id(k, l - 1)].into_iter().flatten() {
                    band.set(i, j, -scale);
                }
            }
        }
    }
    Ok(SymOperator::banded(band).with_hint(Definiteness::PositiveDefinite))
}

/// Five-point Laplacian on an `nx × ny` interior grid with spacings
/// `hx`, `hy`, and its eigenvalues in ascending order.
///
/// Node `(p, q)` has index `p·ny + q`.
pub fn gen_laplacian_rect(nx: usize, ny: usize, hx: f64, hy: f64) -> Result<(SymOperator, Vec<f64>)> {
    if nx == 0 || ny == 0 {
        return Err(Error::Parameter("rectangle grid needs nx, ny >= 1".into()));
    }
    if !(hx > 0.0 && hy > 0.0) {
        return Err(Error::Parameter("grid spacings must be positive".into()));
    }
    let n = nx * ny;
    let cx = 1.0 / (hx * hx);
    let cy = 1.0 / (hy * hy);
    let bw = if nx > 1 {
        ny
    } else if ny > 1 {
        1
    } else {
        0
    };
    let mut band = BandedLower::zeros(n, bw);
    for p in 0..nx {
        for q in 0..ny {
            let i = p * ny + q;
            band.set(i, i, 2.0 * cx + 2.0 * cy);
            if q > 0 {
                band.set(i, i - 1, -cy);
            }
            if p > 0 {
                band.set(i, i - ny, -cx);
            }
        }
    }
    let mut lambda = Vec::with_capacity(n);
    for p in 1..=nx {
        let lx = (2.0 - 2.0 * (p as f64 * std::f64::consts::PI / (nx + 1) as f64).cos()) * cx;
        for q in 1..=ny {
            let ly = (2.0 - 2.0 * (q as f64 * std::f64::consts::PI / (ny + 1) as f64).cos()) * cy;
            lambda.push(lx + ly);
        }
    }
    lambda.sort_by(|a, b| a.total_cmp(b));
    Ok((SymOperator::banded(band).with_hint(Definiteness::PositiveDefinite), lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixkit::{cholesky, Storage};

    #[test]
    fn diag_cluster_example_values() {
        let (m, a) = gen_diag_cluster(6000).unwrap();
        let d = m.diag();
        assert!((d[0] - 10.06).abs() < 1e-14);
        assert!((d[5] - 10.01).abs() < 1e-14);
        assert_eq!(d[6], 9.0);
        assert_eq!(d[5999], 1.0);
        assert!(((d[6] - d[7]) - 8.0 / 5993.0).abs() < 1e-15);
        assert!(a.is_identity());
    }

    #[test]
    fn diag_cluster_minimal() {
        let (m, _) = gen_diag_cluster(8).unwrap();
        let expect = [10.06, 10.05, 10.04, 10.03, 10.02, 10.01, 9.0, 1.0];
        for (v, e) in m.diag().iter().zip(expect) {
            assert!((v - e).abs() < 1e-14);
        }
        assert!(gen_diag_cluster(7).is_err());
    }

    #[test]
    fn diag_cluster_tail_is_equidistant() {
        let d = diag_cluster_values(6000);
        assert!(d.windows(2).all(|w| w[0] >= w[1]));
        let step = 8.0 / 5993.0;
        for w in d[6..].windows(2) {
            assert!(((w[0] - w[1]) - step).abs() <= 1e-15 * 9.0 / step * step);
        }
    }

    #[test]
    fn slit_dimension() {
        assert_eq!(gen_laplacian_slit(1.0 / 70.0).unwrap().n(), 9534);
        assert_eq!(139 * 69 - 57, 9534);
        assert_eq!(gen_laplacian_slit_m(2).unwrap().n(), 2);
        assert!(gen_laplacian_slit(0.3).is_err());
        assert!(gen_laplacian_slit(1.0).is_err());
    }

    #[test]
    fn slit_nodes_by_enumeration() {
        let count = |m: usize| (1..m).filter(|&l| on_slit(m, l, m)).count();
        assert_eq!(count(70), 57);
        assert_eq!(count(3), 2);
        assert_eq!(count(10), 9);
        assert!(!on_slit(69, 10, 70));
    }

    #[test]
    fn slit_matrix_structure() {
        let a = gen_laplacian_slit_m(3).unwrap();
        // 5 x 2 interior nodes, two removed
        assert_eq!(a.n(), 8);
        let d = a.to_dense();
        assert_eq!(d, d.transpose());
        for i in 0..a.n() {
            let off: f64 = (0..a.n()).filter(|&j| j != i).map(|j| d[(i, j)].abs()).sum();
            assert!(d[(i, i)] > 0.0 && d[(i, i)] >= off);
        }
        assert!(a.bandwidth() <= 2);
        assert!(cholesky(&a).is_ok());
        let big = gen_laplacian_slit_m(70).unwrap();
        assert!(big.bandwidth() <= 69);
        assert!(matches!(big.storage(), Storage::Banded(_)));
    }

    #[test]
    fn rect_single_node() {
        let (a, l) = gen_laplacian_rect(1, 1, 0.5, 0.5).unwrap();
        assert_eq!(a.entry(0, 0), 16.0);
        assert!((l[0] - 16.0).abs() < 1e-12);
    }

    #[test]
    fn rect_three_by_one() {
        let (_, l) = gen_laplacian_rect(3, 1, 1.0, 1.0).unwrap();
        let s = 2f64.sqrt();
        let expect = [2.0 - s + 2.0, 4.0, 2.0 + s + 2.0];
        for (a, b) in l.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rect_matches_dense_spectrum() {
        let (a, l) = gen_laplacian_rect(5, 4, 0.2, 0.3).unwrap();
        let e = crate::matrixkit::sym_eig_small(&a.to_dense(), None).unwrap();
        let mut dense = e.values.clone();
        dense.reverse();
        for (x, y) in dense.iter().zip(&l) {
            assert!((x - y).abs() <= 1e-10 * y.abs());
        }
    }
}
