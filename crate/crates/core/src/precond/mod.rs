//! Tangent-space preconditioners: exact inverses of `Proj_X ∘ P ∘ Proj_X` for
//! `P X = E X D`, `P X = A X + X B` and `P X = A X D + E X B`, the tangADI
//! approximation, and ADI shift generation.

mod kron;
mod shifts;
mod spectral;
mod sylvester;
mod tangadi;

use std::sync::Arc;

pub use kron::solve_kron;
pub use shifts::{log_grid, wachspress_shifts, ShiftSet};
pub use spectral::{spectral_interval, LANCZOS_STEPS};
pub use sylvester::{solve_gen_sylvester, solve_sylvester, MAX_DIRECT_RANK};
pub use tangadi::TangAdi;

use crate::error::{Error, Result};
use crate::geometry::{FixedRankPoint, KroneckerMetric, TangentVector, Weight};
use crate::numkit::SparseMatrix;

/// Action of `P̃_X⁻¹` used to precondition the Riemannian gradient.
#[derive(Debug, Clone)]
pub enum PrecondSpec {
    Identity,
    /// `P X = E X D` in the standard geometry.
    Kron { e: Weight, d: Weight },
    /// `P X = A X + X B` in the standard geometry.
    Sylvester { a: SparseMatrix, b: SparseMatrix },
    /// `P̃ X = E⁻¹A X + X B D⁻¹` in the geometry of `metric = (E, D)`.
    GenSylvester { a: SparseMatrix, b: SparseMatrix, metric: Arc<KroneckerMetric> },
    TangAdi(Arc<TangAdi>),
}

impl PrecondSpec {
    pub fn kron(e: &SparseMatrix, d: &SparseMatrix) -> Result<Self> {
        Ok(PrecondSpec::Kron { e: Weight::new(e)?, d: Weight::new(d)? })
    }

    pub fn sylvester(a: &SparseMatrix, b: &SparseMatrix) -> Result<Self> {
        // Factorizing here rejects non-SPD input early.
        crate::numkit::SpdFactorization::new(a)?;
        crate::numkit::SpdFactorization::new(b)?;
        Ok(PrecondSpec::Sylvester { a: a.clone(), b: b.clone() })
    }

    pub fn gen_sylvester(a: &SparseMatrix, b: &SparseMatrix, metric: Arc<KroneckerMetric>) -> Result<Self> {
        if a.nrows() != metric.rows() || b.nrows() != metric.cols() {
            return Err(Error::DimensionMismatch("preconditioner and metric".into()));
        }
        crate::numkit::SpdFactorization::new(a)?;
        crate::numkit::SpdFactorization::new(b)?;
        Ok(PrecondSpec::GenSylvester { a: a.clone(), b: b.clone(), metric })
    }

    pub fn tangadi(
        a: &SparseMatrix,
        b: &SparseMatrix,
        e: &SparseMatrix,
        d: &SparseMatrix,
        shifts: ShiftSet,
        steps: usize,
    ) -> Result<Self> {
        Ok(PrecondSpec::TangAdi(Arc::new(TangAdi::new(a, b, e, d, shifts, steps)?)))
    }

    pub fn label(&self) -> &'static str {
        match self {
            PrecondSpec::Identity => "identity",
            PrecondSpec::Kron { .. } => "kron",
            PrecondSpec::Sylvester { .. } => "sylvester",
            PrecondSpec::GenSylvester { .. } => "gen_sylvester",
            PrecondSpec::TangAdi(_) => "tangadi",
        }
    }

    /// Whether the preconditioner can be applied at points carrying `metric`.
    pub fn compatible_with(&self, metric: &KroneckerMetric) -> bool {
        match self {
            PrecondSpec::Identity => true,
            PrecondSpec::GenSylvester { metric: m, .. } => m.same_as(metric),
            _ => metric.is_identity(),
        }
    }

    pub fn apply(&self, x: &FixedRankPoint, eta: &TangentVector) -> Result<TangentVector> {
        eta.check_base(x)?;
        if !self.compatible_with(x.metric()) {
            return Err(Error::MetricMismatch);
        }
        match self {
            PrecondSpec::Identity => Ok(eta.clone()),
            PrecondSpec::Kron { e, d } => solve_kron(x, eta, e, d),
            PrecondSpec::Sylvester { a, b } => solve_sylvester(x, eta, a, b),
            PrecondSpec::GenSylvester { a, b, .. } => solve_gen_sylvester(x, eta, a, b),
            PrecondSpec::TangAdi(t) => t.apply(x, eta),
        }
    }
}
