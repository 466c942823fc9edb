//! Benchmark problem families: finite-difference diffusion with a
//! semi-separable coefficient, stochastic Galerkin systems and small
//! synthetic instances.

mod fd;
mod legendre;
mod stoch;
mod synthetic;

use std::collections::BTreeMap;
use std::sync::Arc;

pub use fd::{
    fd_diffusion_preconditioners, fd_series_instance, gen_fd_diffusion, nodal_1d, exp_boundary,
    series_coefficient, series_k0_factor, stiffness_1d, stiffness_2d, Coef1, SeparableTerm,
};
pub use legendre::{gauss_legendre, legendre_normalized, total_degree_indices, LegendreProducts};
pub use stoch::{gen_stoch_galerkin, stoch_galerkin_default, stoch_galerkin_preconditioners, Coef2};
pub use synthetic::{gen_synthetic, identity_instance};

use crate::error::{Error, Result};
use crate::geometry::KroneckerMetric;
use crate::numkit::SparseMatrix;
use crate::operator::{LowRankRhs, MultitermOperator};
use crate::precond::{spectral_interval, wachspress_shifts, PrecondSpec, ShiftSet};

/// Constituent matrices of a suggested preconditioner.
#[derive(Debug, Clone)]
pub enum PrecondRecipe {
    /// `P X = E X D`, used as the metric.
    Kron { e: SparseMatrix, d: SparseMatrix },
    /// `P X = A X + X B`.
    Sylvester { a: SparseMatrix, b: SparseMatrix },
    /// `P X = A X D + E X B`.
    GenSylvester { a: SparseMatrix, b: SparseMatrix, d: SparseMatrix, e: SparseMatrix },
}

impl PrecondRecipe {
    pub fn kind(&self) -> &'static str {
        match self {
            PrecondRecipe::Kron { .. } => "kron",
            PrecondRecipe::Sylvester { .. } => "sylvester",
            PrecondRecipe::GenSylvester { .. } => "gen_sylvester",
        }
    }

    /// Named constituent matrices.
    pub fn matrices(&self) -> Vec<(&'static str, &SparseMatrix)> {
        match self {
            PrecondRecipe::Kron { e, d } => vec![("e", e), ("d", d)],
            PrecondRecipe::Sylvester { a, b } => vec![("a", a), ("b", b)],
            PrecondRecipe::GenSylvester { a, b, d, e } => vec![("a", a), ("b", b), ("d", d), ("e", e)],
        }
    }

    /// Rebuilds a recipe from its kind and named matrices.
    pub fn from_matrices(kind: &str, mut mats: BTreeMap<String, SparseMatrix>) -> Result<Self> {
        let mut take = |k: &str| {
            mats.remove(k).ok_or_else(|| Error::Parse(format!("preconditioner matrix `{k}` missing")))
        };
        Ok(match kind {
            "kron" => PrecondRecipe::Kron { e: take("e")?, d: take("d")? },
            "sylvester" => PrecondRecipe::Sylvester { a: take("a")?, b: take("b")? },
            "gen_sylvester" => {
                PrecondRecipe::GenSylvester { a: take("a")?, b: take("b")?, d: take("d")?, e: take("e")? }
            }
            other => return Err(Error::Parse(format!("unknown preconditioner kind `{other}`"))),
        })
    }

    /// Metric and gradient preconditioner realizing the exact inverse.
    ///
    /// Kronecker recipes become the metric with no further preconditioning,
    /// generalized Sylvester recipes use the metric `(E, D)` and the exact
    /// projected solve.
    pub fn exact(&self, m: usize, n: usize) -> Result<(Arc<KroneckerMetric>, PrecondSpec)> {
        match self {
            PrecondRecipe::Kron { e, d } => Ok((KroneckerMetric::new(e, d)?, PrecondSpec::Identity)),
            PrecondRecipe::Sylvester { a, b } => {
                Ok((KroneckerMetric::identity(m, n), PrecondSpec::sylvester(a, b)?))
            }
            PrecondRecipe::GenSylvester { a, b, d, e } => {
                let metric = KroneckerMetric::new(e, d)?;
                let p = PrecondSpec::gen_sylvester(a, b, Arc::clone(&metric))?;
                Ok((metric, p))
            }
        }
    }

    /// tangADI approximation in the standard geometry with `shifts`
    /// Wachspress shifts cycled over `steps` steps.
    pub fn tangadi(&self, m: usize, n: usize, shifts: usize, steps: usize) -> Result<(Arc<KroneckerMetric>, PrecondSpec)> {
        let (a, b, e, d, set) = self.adi_data(m, n, shifts)?;
        Ok((KroneckerMetric::identity(m, n), PrecondSpec::tangadi(&a, &b, &e, &d, set, steps)?))
    }

    /// Coefficients `(A, B, E, D)` of the generalized Sylvester form and
    /// `shifts` Wachspress shift pairs for them.
    pub fn adi_data(
        &self,
        m: usize,
        n: usize,
        shifts: usize,
    ) -> Result<(SparseMatrix, SparseMatrix, SparseMatrix, SparseMatrix, ShiftSet)> {
        let (a, b, d, e) = match self {
            PrecondRecipe::GenSylvester { a, b, d, e } => (a.clone(), b.clone(), d.clone(), e.clone()),
            PrecondRecipe::Sylvester { a, b } => {
                (a.clone(), b.clone(), SparseMatrix::identity(n), SparseMatrix::identity(m))
            }
            PrecondRecipe::Kron { .. } => {
                return Err(Error::InvalidArgument("ADI needs a Sylvester-type preconditioner".into()))
            }
        };
        let (lo_a, hi_a) = spectral_interval(&a, &e)?;
        let (lo_b, hi_b) = spectral_interval(&b, &d)?;
        let set = wachspress_shifts(lo_a, hi_a, lo_b, hi_b, shifts)?;
        Ok((a, b, e, d, set))
    }
}

/// An equation `Σ Aᵢ X Bᵢᵀ = F` with its suggested preconditioners.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub family: String,
    pub op: MultitermOperator,
    pub rhs: LowRankRhs,
    pub p1: Option<PrecondRecipe>,
    pub p2: Option<PrecondRecipe>,
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl ProblemInstance {
    pub fn new(family: &str, op: MultitermOperator, rhs: LowRankRhs) -> Result<Self> {
        if rhs.rows() != op.rows() || rhs.cols() != op.cols() {
            return Err(Error::DimensionMismatch("right-hand side and operator".into()));
        }
        Ok(ProblemInstance { family: family.into(), op, rhs, p1: None, p2: None, meta: BTreeMap::new() })
    }

    pub fn rows(&self) -> usize {
        self.op.rows()
    }

    pub fn cols(&self) -> usize {
        self.op.cols()
    }

    pub fn recipe(&self, label: &str) -> Option<&PrecondRecipe> {
        match label {
            "P1" | "p1" => self.p1.as_ref(),
            "P2" | "p2" => self.p2.as_ref(),
            _ => None,
        }
    }
}
