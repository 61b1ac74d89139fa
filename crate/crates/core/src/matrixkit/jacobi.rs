use nalgebra::DMatrix;

use super::chol::dense_cholesky;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a small symmetric (or symmetric-definite) problem.
#[derive(Debug, Clone)]
pub struct SmallEig {
    /// Eigenvalues in non-increasing order.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, orthonormal in the metric of the problem.
    pub vectors: DMatrix<f64>,
}

/// Solves `S C = G C diag(θ)` with `θ` descending.
///
/// With `g = None` the metric is the identity. The definite case is reduced
/// to a standard problem with the Cholesky factor of `G`; the standard
/// problem is solved by cyclic Jacobi rotations.
pub fn sym_eig_small(s: &DMatrix<f64>, g: Option<&DMatrix<f64>>) -> Result<SmallEig> {
    let k = s.nrows();
    if s.ncols() != k {
        return Err(Error::dims("sym_eig_small", k, s.ncols()));
    }
    match g {
        None => {
            let sym = symmetrize(s);
            jacobi(&sym)
        }
        Some(g) => {
            if g.nrows() != k || g.ncols() != k {
                return Err(Error::dims("sym_eig_small (metric)", k, g.nrows()));
            }
            let l = dense_cholesky(&symmetrize(g))?;
            // S' = L⁻¹ S L⁻ᵀ
            let linv_s = lower_solve(&l, &symmetrize(s));
            let reduced = symmetrize(&lower_solve(&l, &linv_s.transpose()));
            let mut eig = jacobi(&reduced)?;
            eig.vectors = upper_solve_transposed(&l, &eig.vectors);
            Ok(eig)
        }
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `L⁻¹ B` for lower triangular `L`.
fn lower_solve(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let k = l.nrows();
    let mut x = b.clone();
    for c in 0..b.ncols() {
        for i in 0..k {
            let mut v = x[(i, c)];
            for p in 0..i {
                v -= l[(i, p)] * x[(p, c)];
            }
            x[(i, c)] = v / l[(i, i)];
        }
    }
    x
}

/// `L⁻ᵀ B` for lower triangular `L`.
fn upper_solve_transposed(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let k = l.nrows();
    let mut x = b.clone();
    for c in 0..b.ncols() {
        for i in (0..k).rev() {
            let mut v = x[(i, c)];
            for p in i + 1..k {
                v -= l[(p, i)] * x[(p, c)];
            }
            x[(i, c)] = v / l[(i, i)];
        }
    }
    x
}

fn off_norm(a: &DMatrix<f64>) -> f64 {
    let k = a.nrows();
    let mut s = 0.0;
    for j in 0..k {
        for i in 0..j {
            s += 2.0 * a[(i, j)] * a[(i, j)];
        }
    }
    s.sqrt()
}

fn jacobi(s: &DMatrix<f64>) -> Result<SmallEig> {
    let k = s.nrows();
    let mut a = s.clone();
    let mut v = DMatrix::<f64>::identity(k, k);
    let frob = a.norm();
    if k <= 1 || frob == 0.0 {
        return Ok(sorted(a, v));
    }
    let negligible = f64::EPSILON * 1e-3 * frob;
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k - 1 {
            for q in p + 1..k {
                let apq = a[(p, q)];
                if apq.abs() <= negligible {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                if sn == 0.0 {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                rotated = true;
                for r in 0..k {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = c * arp - sn * arq;
                    a[(r, q)] = sn * arp + c * arq;
                }
                for r in 0..k {
                    let apr = a[(p, r)];
                    let aqr = a[(q, r)];
                    a[(p, r)] = c * apr - sn * aqr;
                    a[(q, r)] = sn * apr + c * aqr;
                }
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for r in 0..k {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = c * vrp - sn * vrq;
                    v[(r, q)] = sn * vrp + c * vrq;
                }
            }
        }
        if !rotated {
            return Ok(sorted(a, v));
        }
    }
    Err(Error::NoConvergence {
        what: "Jacobi eigensolver",
        detail: format!("off-diagonal norm {:e} after {MAX_SWEEPS} sweeps", off_norm(&a)),
    })
}

fn sorted(a: DMatrix<f64>, v: DMatrix<f64>) -> SmallEig {
    let k = a.nrows();
    let mut order: Vec<usize> = (0..k).collect();
    // stable: equal values keep their diagonal position
    order.sort_by(|&x, &y| a[(y, y)].partial_cmp(&a[(x, x)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(k, k, |r, c| v[(r, order[c])]);
    SmallEig { values, vectors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn backward_error(s: &DMatrix<f64>, g: Option<&DMatrix<f64>>, e: &SmallEig) -> f64 {
        let k = s.nrows();
        let id = DMatrix::identity(k, k);
        let g = g.unwrap_or(&id);
        let theta = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.values.clone()));
        (s * &e.vectors - g * &e.vectors * theta).amax()
    }

    #[test]
    fn diagonal_input() {
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let e = sym_eig_small(&s, None).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        for c in 0..3 {
            assert_eq!(e.vectors.column(c).amax(), 1.0);
        }
    }

    #[test]
    fn two_by_two_characteristic_polynomial() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = sym_eig_small(&s, None).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-15);
        assert!((e.values[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn generalized_pair_by_hand() {
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 2.0]));
        let g = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
        let e = sym_eig_small(&s, Some(&g)).unwrap();
        assert!((e.values[0] - 2.0).abs() < 1e-15);
        assert!((e.values[1] - 1.0).abs() < 1e-15);
        let gram = e.vectors.transpose() * &g * &e.vectors;
        assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn rejects_indefinite_metric() {
        let s = DMatrix::identity(2, 2);
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            sym_eig_small(&s, Some(&g)),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    /// Eigenvalues by bisection on the characteristic polynomial, evaluated
    /// through a Sturm count of `S - x I` (LDLᵀ pivots of a dense matrix).
    fn bisection_eigenvalues(s: &DMatrix<f64>) -> Vec<f64> {
        let k = s.nrows();
        let count_below = |x: f64| -> usize {
            // number of negative pivots of S - xI (Sylvester inertia)
            let mut m = s.clone();
            for i in 0..k {
                m[(i, i)] -= x;
            }
            let mut neg = 0;
            for j in 0..k {
                let mut d = m[(j, j)];
                if d == 0.0 {
                    d = 1e-300;
                }
                if d < 0.0 {
                    neg += 1;
                }
                for i in j + 1..k {
                    let f = m[(i, j)] / d;
                    for c in j + 1..k {
                        m[(i, c)] -= f * m[(j, c)];
                    }
                }
            }
            neg
        };
        let r = s.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        let mut out = Vec::new();
        for idx in 0..k {
            // idx-th smallest eigenvalue: smallest x with count_below(x) > idx
            let (mut lo, mut hi) = (-r, r);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if count_below(mid) > idx {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        out.reverse();
        out
    }

    proptest! {
        #[test]
        fn matches_bisection_oracle(k in 1usize..=4, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
            let s = symmetrize(&m);
            let e = sym_eig_small(&s, None).unwrap();
            let oracle = bisection_eigenvalues(&s);
            for (a, b) in e.values.iter().zip(&oracle) {
                prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
            prop_assert!(backward_error(&s, None, &e) <= 1e-12 * s.norm().max(1.0));
        }

        #[test]
        fn generalized_backward_error(k in 2usize..=12, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
            let s = symmetrize(&m);
            let b = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
            let g = b.transpose() * &b + DMatrix::identity(k, k);
            let e = sym_eig_small(&s, Some(&g)).unwrap();
            prop_assert!(backward_error(&s, Some(&g), &e) <= 1e-12 * s.norm().max(1.0) * 10.0);
            prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
