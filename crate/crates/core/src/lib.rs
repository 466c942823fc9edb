//! Low-rank Riemannian solvers for symmetric positive definite multiterm
//! matrix equations `Σ Aᵢ X Bᵢᵀ = F`.

pub mod error;
pub mod io;
pub mod numkit;

pub use error::{Error, Result};
pub mod geometry;
pub mod oracle;
pub mod operator;
pub mod precond;
pub mod problems;
pub mod rnlcg;
pub mod trace;
pub mod rram;
pub mod trunc_cg;
