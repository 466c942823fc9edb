use crate::error::{Error, Result};
use crate::numkit::{hcat, qr_thin, Mat};

use super::metric::KroneckerMetric;

/// A matrix held as `left · rightᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredMatrix {
    pub left: Mat,
    pub right: Mat,
}

impl FactoredMatrix {
    pub fn new(left: Mat, right: Mat) -> Result<Self> {
        if left.ncols() != right.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "factor widths {} and {}",
                left.ncols(),
                right.ncols()
            )));
        }
        Ok(FactoredMatrix { left, right })
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        FactoredMatrix { left: Mat::zeros(m, 0), right: Mat::zeros(n, 0) }
    }

    pub fn rows(&self) -> usize {
        self.left.nrows()
    }

    pub fn cols(&self) -> usize {
        self.right.nrows()
    }

    /// Width of the factors (an upper bound on the rank).
    pub fn width(&self) -> usize {
        self.left.ncols()
    }

    pub fn dense(&self) -> Mat {
        &self.left * self.right.transpose()
    }

    pub fn scaled(&self, s: f64) -> Self {
        FactoredMatrix { left: &self.left * s, right: self.right.clone() }
    }

    pub fn transpose(&self) -> Self {
        FactoredMatrix { left: self.right.clone(), right: self.left.clone() }
    }

    /// Factored sum by concatenation; no recompression.
    pub fn concat(parts: &[&FactoredMatrix]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty factored sum".into()))?;
        for p in parts {
            if p.rows() != first.rows() || p.cols() != first.cols() {
                return Err(Error::DimensionMismatch("factored sum operands".into()));
            }
        }
        let l: Vec<&Mat> = parts.iter().map(|p| &p.left).collect();
        let r: Vec<&Mat> = parts.iter().map(|p| &p.right).collect();
        Ok(FactoredMatrix { left: hcat(&l), right: hcat(&r) })
    }

    pub fn add(&self, other: &FactoredMatrix) -> Result<Self> {
        Self::concat(&[self, other])
    }

    /// `‖·‖_F` computed through QR of both factors.
    pub fn frob_norm(&self) -> f64 {
        if self.width() == 0 {
            return 0.0;
        }
        let (_, rl) = qr_thin(&self.left);
        let (_, rr) = qr_thin(&self.right);
        (rl * rr.transpose()).norm()
    }

    /// `‖·‖_B` computed through QR of `C_E L` and `C_D R`.
    pub fn b_norm(&self, metric: &KroneckerMetric) -> f64 {
        if self.width() == 0 {
            return 0.0;
        }
        let (_, rl) = qr_thin(&metric.e.c_mul(&self.left));
        let (_, rr) = qr_thin(&metric.d.c_mul(&self.right));
        (rl * rr.transpose()).norm()
    }

    /// `⟨self, other⟩_F` without forming either product.
    pub fn inner(&self, other: &FactoredMatrix) -> f64 {
        let a = self.left.transpose() * &other.left;
        let b = self.right.transpose() * &other.right;
        crate::numkit::inner(&a, &b)
    }
}
