//! Symmetric matrix storage, factorizations and small dense kernels.

mod chol;
mod jacobi;
mod operator;
mod subspace;
mod svd;

pub use chol::{cholesky, dense_cholesky, CholFactor};
pub use jacobi::{sym_eig_small, SmallEig};
pub use operator::{BandedLower, CsrUpper, Definiteness, Storage, SymOperator};
pub use subspace::{
    orthonormalize, orthonormalize_with_image, InnerProduct, Metric, OrthoOptions, Subspace,
};
pub use svd::{svd_block, BlockSvd};



use nalgebra::DMatrix;

/// `Aᵀ B` through a strided GEMM, without forming `Aᵀ`.
pub fn at_b(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows(), "at_b: row counts differ");
    let (n, k, m) = (a.nrows(), a.ncols(), b.ncols());
    let mut c = DMatrix::<f64>::zeros(k, m);
    if n == 0 || k == 0 || m == 0 {
        return c;
    }
    // SAFETY: the pointers cover column-major storage of the stated shapes
    // and c does not alias a or b.
    unsafe {
        matrixmultiply::dgemm(
            k,
            n,
            m,
            1.0,
            a.as_ptr(),
            n as isize,
            1,
            b.as_ptr(),
            1,
            n as isize,
            0.0,
            c.as_mut_ptr(),
            1,
            k as isize,
        );
    }
    c
}
