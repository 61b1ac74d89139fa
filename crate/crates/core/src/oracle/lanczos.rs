use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrixkit::{at_b, orthonormalize_with_image, InnerProduct, OrthoOptions, Subspace};

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Relative residual target `‖K w − θ w‖_G ≤ tol · |θ|`.
    pub tol: f64,
    /// Block size; defaults to `min(k, 4)` but at least 2.
    pub block: Option<usize>,
    /// Largest basis before a thick restart.
    pub max_basis: Option<usize>,
    /// Cap on operator applications; defaults to `5 n`.
    pub max_applies: Option<usize>,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            block: None,
            max_basis: None,
            max_applies: None,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LanczosResult {
    /// Extreme Ritz values, most extreme first.
    pub values: Vec<f64>,
    /// Matching Ritz vectors, orthonormal in the metric.
    pub vectors: Subspace,
    /// `‖K w − θ w‖_G / |θ|` per pair.
    pub residuals: Vec<f64>,
    pub applies: usize,
}

/// Block Lanczos with full reorthogonalization and thick restarts for an
/// operator `K` that is self-adjoint in the inner product `ip`.
///
/// The projected matrix `Qᵀ G K Q` is formed explicitly from stored images
/// `K Q`, so no three-term structure is relied on.
pub fn block_lanczos(
    apply: &dyn Fn(&DMatrix<f64>) -> Result<DMatrix<f64>>,
    ip: InnerProduct<'_>,
    n: usize,
    k: usize,
    largest: bool,
    opts: &LanczosOptions,
) -> Result<LanczosResult> {
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }
    let b = opts.block.unwrap_or(k.min(4)).max(2).min(n);
    let max_basis = opts.max_basis.unwrap_or(400).max(k + 3 * b).min(n);
    let max_applies = opts.max_applies.unwrap_or(5 * n).max(k + 2 * b);
    let keep = (k + b).min(max_basis.saturating_sub(b)).max(k);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start = DMatrix::from_fn(n, b, |_, _| StandardNormal.sample(&mut rng));

    let mut q = DMatrix::<f64>::zeros(n, 0);
    let mut gq = DMatrix::<f64>::zeros(n, 0);
    let mut kq = DMatrix::<f64>::zeros(n, 0);
    let mut t = DMatrix::<f64>::zeros(0, 0);
    let mut next = start;
    let mut applies = 0;
    let mut best_res = f64::INFINITY;

    loop {
        // expand by the G-orthogonal complement of `next`; columns that are
        // numerically inside span(Q) carry no new direction and are dropped
        let before: Vec<f64> = ip_norms(&next, &ip.apply(&next));
        let mut w = next;
        for _ in 0..2 {
            if q.ncols() > 0 {
                let c = at_b(&gq, &w);
                w -= &q * c;
            }
        }
        let gw_full = ip.apply(&w);
        let after = ip_norms(&w, &gw_full);
        let fresh: Vec<usize> = (0..w.ncols()).filter(|&j| after[j] > 1e-10 * before[j]).collect();
        let w = DMatrix::from_fn(n, fresh.len(), |i, j| w[(i, fresh[j])]);
        let gw = DMatrix::from_fn(n, fresh.len(), |i, j| gw_full[(i, fresh[j])]);
        let block = orthonormalize_with_image(
            &w,
            &gw,
            ip,
            OrthoOptions {
                allow_truncation: true,
                drop_tol: Some(1e-20),
            },
        )?;
        let exhausted = block.dim() == 0;
        if !exhausted {
            // reject directions that reorthogonalization could not separate
            let overlap = if q.ncols() > 0 {
                at_b(&gq, block.basis()).amax()
            } else {
                0.0
            };
            if overlap > 1e-8 {
                return Err(Error::NoConvergence {
                    what: "block Lanczos",
                    detail: format!("loss of orthogonality {overlap:e}"),
                });
            }
            let kb = apply(block.basis())?;
            applies += block.dim();
            let m0 = q.ncols();
            let m1 = m0 + block.dim();
            let cross = at_b(&gq, &kb);
            let diag = at_b(block.gbasis(), &kb);
            let mut t2 = DMatrix::<f64>::zeros(m1, m1);
            t2.view_mut((0, 0), (m0, m0)).copy_from(&t);
            t2.view_mut((0, m0), (m0, m1 - m0)).copy_from(&cross);
            t2.view_mut((m0, 0), (m1 - m0, m0)).copy_from(&cross.transpose());
            let dsym = (&diag + diag.transpose()) * 0.5;
            t2.view_mut((m0, m0), (m1 - m0, m1 - m0)).copy_from(&dsym);
            t = t2;
            q = hcat(&q, block.basis());
            gq = hcat(&gq, block.gbasis());
            kq = hcat(&kq, &kb);
        }
        let m = q.ncols();
        if m < k {
            next = if exhausted {
                DMatrix::from_fn(n, b, |_, _| StandardNormal.sample(&mut rng))
            } else {
                kq.columns(m - block.dim(), block.dim()).into_owned()
            };
            continue;
        }

        // Ritz extraction
        let eig = SymmetricEigen::new(t.clone());
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&x, &y| {
            let (a, c) = (eig.eigenvalues[x], eig.eigenvalues[y]);
            if largest {
                c.total_cmp(&a)
            } else {
                a.total_cmp(&c)
            }
        });
        let want = (k + b).min(m);
        let c = DMatrix::from_fn(m, want, |r, j| eig.eigenvectors[(r, order[j])]);
        let theta: Vec<f64> = order[..want].iter().map(|&j| eig.eigenvalues[j]).collect();
        let y = &q * &c;
        let ky = &kq * &c;
        let mut r = ky.clone();
        for j in 0..want {
            r.column_mut(j).axpy(-theta[j], &y.column(j), 1.0);
        }
        let gr = ip.apply(&r);
        let res: Vec<f64> = (0..want)
            .map(|j| r.column(j).dot(&gr.column(j)).max(0.0).sqrt() / theta[j].abs().max(f64::MIN_POSITIVE))
            .collect();
        let worst = res[..k].iter().cloned().fold(0.0, f64::max);
        best_res = best_res.min(worst);
        if worst <= opts.tol || m == n {
            let gy = &gq * c.columns(0, k);
            let vectors = Subspace::from_parts(y.columns(0, k).into_owned(), gy, ip.metric());
            return Ok(LanczosResult {
                values: theta[..k].to_vec(),
                vectors,
                residuals: res[..k].to_vec(),
                applies,
            });
        }
        if applies >= max_applies {
            return Err(Error::NoConvergence {
                what: "block Lanczos",
                detail: format!(
                    "{applies} operator applications, worst relative residual {worst:e} (best {best_res:e})"
                ),
            });
        }
        if m + b > max_basis && max_basis < n {
            // thick restart on the wanted Ritz vectors; expand by their residuals
            let kk = keep.min(want);
            let ck = c.columns(0, kk).into_owned();
            q = y.columns(0, kk).into_owned();
            gq = &gq * &ck;
            kq = ky.columns(0, kk).into_owned();
            t = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&theta[..kk]));
            let pick: Vec<usize> = (0..kk)
                .filter(|&j| res[j] > opts.tol)
                .chain((0..kk).filter(|&j| res[j] <= opts.tol))
                .take(b)
                .collect();
            next = DMatrix::from_fn(n, pick.len(), |i, j| r[(i, pick[j])]);
        } else if exhausted {
            // invariant subspace without the wanted pairs: restart the expansion
            next = DMatrix::from_fn(n, b, |_, _| StandardNormal.sample(&mut rng));
        } else {
            next = kq.columns(m - block.dim(), block.dim()).into_owned();
        }
    }
}

fn ip_norms(x: &DMatrix<f64>, gx: &DMatrix<f64>) -> Vec<f64> {
    (0..x.ncols()).map(|j| x.column(j).dot(&gx.column(j)).max(0.0).sqrt()).collect()
}

fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows().max(b.nrows());
    let mut out = DMatrix::zeros(n, a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixkit::SymOperator;
    use nalgebra::DVector;

    #[test]
    fn diagonal_operator_few_iterations() {
        let d = SymOperator::diagonal(DVector::from_fn(200, |i, _| 1.0 + i as f64));
        let f = |x: &DMatrix<f64>| d.apply(x);
        let opts = LanczosOptions {
            block: Some(2),
            ..Default::default()
        };
        let r = block_lanczos(&f, InnerProduct::Identity, 200, 2, true, &opts).unwrap();
        assert!((r.values[0] - 200.0).abs() < 1e-9);
        assert!((r.values[1] - 199.0).abs() < 1e-9);
        let r = block_lanczos(&f, InnerProduct::Identity, 200, 3, false, &opts).unwrap();
        for (v, e) in r.values.iter().zip([1.0, 2.0, 3.0]) {
            assert!((v - e).abs() < 1e-9);
        }
    }

    #[test]
    fn small_diagonal_exact_in_few_steps() {
        let d = SymOperator::diagonal(DVector::from_vec(vec![5.0, 4.0, 3.0, 2.0, 1.0, 0.5, 0.25]));
        let f = |x: &DMatrix<f64>| d.apply(x);
        let r = block_lanczos(&f, InnerProduct::Identity, 7, 2, true, &Default::default()).unwrap();
        assert!(r.applies <= 2 + 5, "applies {}", r.applies);
        assert!((r.values[0] - 5.0).abs() < 1e-12 && (r.values[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn restarts_still_converge() {
        let d = SymOperator::diagonal(DVector::from_fn(500, |i, _| 1.0 + (i as f64).sqrt()));
        let f = |x: &DMatrix<f64>| d.apply(x);
        let opts = LanczosOptions {
            max_basis: Some(24),
            tol: 1e-10,
            ..Default::default()
        };
        let r = block_lanczos(&f, InnerProduct::Identity, 500, 2, false, &opts).unwrap();
        assert!((r.values[0] - 1.0).abs() < 1e-9);
        assert!((r.values[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let d = SymOperator::diagonal(DVector::from_fn(400, |i, _| 1.0 + 1e-3 * i as f64));
        let f = |x: &DMatrix<f64>| d.apply(x);
        let opts = LanczosOptions {
            max_applies: Some(10),
            max_basis: Some(12),
            ..Default::default()
        };
        match block_lanczos(&f, InnerProduct::Identity, 400, 2, true, &opts) {
            Err(Error::NoConvergence { detail, .. }) => assert!(detail.contains("residual")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
