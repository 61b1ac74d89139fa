use nalgebra::DMatrix;

use super::at_b;
use super::jacobi::sym_eig_small;
use crate::error::Result;

/// Singular values (descending) and right singular vectors of a block.
#[derive(Debug, Clone)]
pub struct BlockSvd {
    pub values: Vec<f64>,
    pub right: DMatrix<f64>,
}

/// SVD of an `n x k` block through the eigendecomposition of its `k x k`
/// Gram matrix.
///
/// Singular values are re-measured as `‖B v_j‖` from the computed right
/// vectors, so small singular values carry an absolute error of order
/// `ε σ₁` instead of `√ε σ₁`.
pub fn svd_block(b: &DMatrix<f64>) -> Result<BlockSvd> {
    let k = b.ncols();
    if k == 0 {
        return Ok(BlockSvd {
            values: vec![],
            right: DMatrix::zeros(0, 0),
        });
    }
    let gram = at_b(b, b);
    let eig = sym_eig_small(&gram, None)?;
    let bv = b * &eig.vectors;
    let mut pairs: Vec<(f64, usize)> = (0..k).map(|c| (bv.column(c).norm(), c)).collect();
    pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal));
    let values = pairs.iter().map(|p| p.0).collect();
    let right = DMatrix::from_fn(k, k, |r, c| eig.vectors[(r, pairs[c].1)]);
    Ok(BlockSvd { values, right })
}
