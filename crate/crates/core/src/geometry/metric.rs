use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numkit::{Mat, SparseMatrix, SpdFactorization};

/// One side of a Kronecker metric: either the identity or an SPD matrix
/// together with its Cholesky factor `C` (`W = Cᵀ C`).
#[derive(Debug, Clone)]
pub struct Weight {
    n: usize,
    fac: Option<Arc<SpdFactorization>>,
}

impl Weight {
    pub fn identity(n: usize) -> Self {
        Weight { n, fac: None }
    }

    pub fn new(w: &SparseMatrix) -> Result<Self> {
        if !w.is_symmetric(1e-12) {
            return Err(Error::InvalidArgument("metric weight is not symmetric".into()));
        }
        Ok(Weight { n: w.nrows(), fac: Some(Arc::new(SpdFactorization::new(w)?)) })
    }

    pub fn from_factorization(f: Arc<SpdFactorization>) -> Self {
        Weight { n: f.dim(), fac: Some(f) }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_identity(&self) -> bool {
        self.fac.is_none()
    }

    pub fn factorization(&self) -> Option<&Arc<SpdFactorization>> {
        self.fac.as_ref()
    }

    /// Dense copy of the weight matrix.
    pub fn dense(&self) -> Mat {
        match &self.fac {
            None => Mat::identity(self.n, self.n),
            Some(f) => f.matrix().to_dense(),
        }
    }

    pub fn sparse(&self) -> SparseMatrix {
        match &self.fac {
            None => SparseMatrix::identity(self.n),
            Some(f) => f.matrix().clone(),
        }
    }

    /// `W X`.
    pub fn mul(&self, x: &Mat) -> Mat {
        match &self.fac {
            None => x.clone(),
            Some(f) => f.matrix().mul_dense(x),
        }
    }

    /// `W⁻¹ X`.
    pub fn solve(&self, x: &Mat) -> Mat {
        match &self.fac {
            None => x.clone(),
            Some(f) => f.solve_many(x),
        }
    }

    /// `C X`.
    pub fn c_mul(&self, x: &Mat) -> Mat {
        match &self.fac {
            None => x.clone(),
            Some(f) => f.c_mul(x),
        }
    }

    /// `C⁻¹ X`.
    pub fn c_inv(&self, x: &Mat) -> Mat {
        match &self.fac {
            None => x.clone(),
            Some(f) => f.c_inv(x),
        }
    }

    /// `Cᵀ X`.
    pub fn ct_mul(&self, x: &Mat) -> Mat {
        match &self.fac {
            None => x.clone(),
            Some(f) => f.ct_mul(x),
        }
    }

    /// `C⁻ᵀ X`.
    pub fn ct_inv(&self, x: &Mat) -> Mat {
        match &self.fac {
            None => x.clone(),
            Some(f) => f.ct_inv(x),
        }
    }

    fn same_as(&self, other: &Weight) -> bool {
        self.n == other.n
            && match (&self.fac, &other.fac) {
                (None, None) => true,
                (Some(a), Some(b)) => Arc::ptr_eq(a, b),
                _ => false,
            }
    }
}

/// Ambient inner product `⟨X, Y⟩_B = ⟨E X D, Y⟩` on `m×n` matrices.
#[derive(Debug, Clone)]
pub struct KroneckerMetric {
    pub e: Weight,
    pub d: Weight,
}

impl KroneckerMetric {
    pub fn identity(m: usize, n: usize) -> Arc<Self> {
        Arc::new(KroneckerMetric { e: Weight::identity(m), d: Weight::identity(n) })
    }

    pub fn new(e: &SparseMatrix, d: &SparseMatrix) -> Result<Arc<Self>> {
        Ok(Arc::new(KroneckerMetric { e: Weight::new(e)?, d: Weight::new(d)? }))
    }

    pub fn from_weights(e: Weight, d: Weight) -> Arc<Self> {
        Arc::new(KroneckerMetric { e, d })
    }

    pub fn rows(&self) -> usize {
        self.e.dim()
    }

    pub fn cols(&self) -> usize {
        self.d.dim()
    }

    pub fn is_identity(&self) -> bool {
        self.e.is_identity() && self.d.is_identity()
    }

    /// Whether both metrics refer to the same weights.
    pub fn same_as(&self, other: &KroneckerMetric) -> bool {
        self.e.same_as(&other.e) && self.d.same_as(&other.d)
    }

    /// Dense `⟨E X D, Y⟩`.
    pub fn inner_dense(&self, x: &Mat, y: &Mat) -> f64 {
        crate::numkit::inner(&self.d.mul(&self.e.mul(x).transpose()).transpose(), y)
    }
}
