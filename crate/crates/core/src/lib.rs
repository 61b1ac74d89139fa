//! Block preconditioned gradient (BPG) eigensolvers for symmetric matrix
//! pairs `(M, A)` with `A` positive definite, together with the machinery
//! needed to check cluster-robust convergence estimates for individual
//! Ritz values: auxiliary subspace iterations, the alternative quality
//! parameter of a preconditioner, bound curves and a trace validator.
//!
//! The crate is organised bottom-up:
//!
//! - [`matrixkit`]: symmetric operators, Cholesky factors, orthonormal
//!   blocks, a Jacobi solver for small projected problems.
//! - [`problems`]: deterministic test problem generators and MatrixMarket I/O.
//! - [`precond`]: preconditioners and their quality parameters.
//! - [`oracle`]: reference spectra (dense and Lanczos).
//! - [`eigsolve`]: Rayleigh–Ritz and the block iterations, with traces.
//! - [`analysis`]: auxiliary iteration, quality estimates, bounds, validation.

pub mod analysis;
pub mod eigsolve;
pub mod error;
pub mod matrixkit;
pub mod oracle;
pub mod precond;
pub mod problems;

pub use error::{Error, Result};
