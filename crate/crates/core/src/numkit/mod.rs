//! Dense and sparse linear-algebra kernels.

pub mod cholesky;
pub mod dense;
pub mod ordering;
pub mod sparse;

pub use cholesky::SpdFactorization;
pub use dense::{eig_sym, hcat, inner, qr_thin, svd_thin, Mat, Vector};
pub use sparse::SparseMatrix;

/// Factorizes a symmetric positive definite sparse matrix.
pub fn spd_factorize(a: &SparseMatrix) -> crate::error::Result<SpdFactorization> {
    SpdFactorization::new(a)
}
