use crate::error::{Error, Result};
use crate::numkit::{hcat, inner as frob, Mat};

use super::factored::FactoredMatrix;
use super::point::FixedRankPoint;

const ORTHO_TOL: f64 = 1e-10;

/// Tangent vector `Ũ M Ṽᵀ + Ũ_p Ṽᵀ + Ũ Ṽ_pᵀ` at a point, with
/// `ŨᵀE Ũ_p = 0` and `ṼᵀD Ṽ_p = 0`.
#[derive(Debug, Clone)]
pub struct TangentVector {
    pub m: Mat,
    pub up: Mat,
    pub vp: Mat,
    /// `E Ũ_p`.
    pub eup: Mat,
    /// `D Ṽ_p`.
    pub dvp: Mat,
    base: u64,
}

impl TangentVector {
    /// Builds a tangent vector from coefficients, projecting `Ũ_p`, `Ṽ_p`
    /// onto the metric complements of `Ũ`, `Ṽ`.
    pub fn new(x: &FixedRankPoint, m: Mat, up: Mat, vp: Mat) -> Result<Self> {
        let r = x.rank();
        if m.shape() != (r, r) || up.shape() != (x.rows(), r) || vp.shape() != (x.cols(), r) {
            return Err(Error::DimensionMismatch("tangent coefficients".into()));
        }
        let up = &up - x.u() * (x.eu().transpose() * &up);
        let vp = &vp - x.v() * (x.dv().transpose() * &vp);
        let eup = x.metric().e.mul(&up);
        let dvp = x.metric().d.mul(&vp);
        Ok(TangentVector { m, up, vp, eup, dvp, base: x.id() })
    }

    pub fn zero(x: &FixedRankPoint) -> Self {
        let r = x.rank();
        TangentVector {
            m: Mat::zeros(r, r),
            up: Mat::zeros(x.rows(), r),
            vp: Mat::zeros(x.cols(), r),
            eup: Mat::zeros(x.rows(), r),
            dvp: Mat::zeros(x.cols(), r),
            base: x.id(),
        }
    }

    pub fn base_id(&self) -> u64 {
        self.base
    }

    pub fn check_base(&self, x: &FixedRankPoint) -> Result<()> {
        if self.base != x.id() {
            return Err(Error::BasePointMismatch);
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        TangentVector {
            m: &self.m * s,
            up: &self.up * s,
            vp: &self.vp * s,
            eup: &self.eup * s,
            dvp: &self.dvp * s,
            base: self.base,
        }
    }

    /// `a·self + b·other`.
    pub fn lincomb(&self, a: f64, other: &TangentVector, b: f64) -> Result<Self> {
        if self.base != other.base {
            return Err(Error::BasePointMismatch);
        }
        Ok(TangentVector {
            m: &self.m * a + &other.m * b,
            up: &self.up * a + &other.up * b,
            vp: &self.vp * a + &other.vp * b,
            eup: &self.eup * a + &other.eup * b,
            dvp: &self.dvp * a + &other.dvp * b,
            base: self.base,
        })
    }

    /// Metric inner product `⟨M,M'⟩ + ⟨EŨ_p, Ũ_p'⟩ + ⟨DṼ_p, Ṽ_p'⟩`.
    pub fn inner(&self, other: &TangentVector) -> Result<f64> {
        if self.base != other.base {
            return Err(Error::BasePointMismatch);
        }
        Ok(frob(&self.m, &other.m) + frob(&self.eup, &other.up) + frob(&self.dvp, &other.vp))
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).unwrap_or(0.0).max(0.0).sqrt()
    }

    /// Rank-`2r` factorization `[Ũ, Ũ_p] [Ṽ Mᵀ + Ṽ_p, Ṽ]ᵀ`.
    pub fn embed(&self, x: &FixedRankPoint) -> Result<FactoredMatrix> {
        self.check_base(x)?;
        let right0 = x.v() * self.m.transpose() + &self.vp;
        Ok(FactoredMatrix {
            left: hcat(&[x.u(), &self.up]),
            right: hcat(&[&right0, x.v()]),
        })
    }

    pub fn dense(&self, x: &FixedRankPoint) -> Result<Mat> {
        Ok(self.embed(x)?.dense())
    }

    /// Largest violation of the gauge conditions, relative to the factor sizes.
    pub fn gauge_error(&self, x: &FixedRankPoint) -> f64 {
        let a = (x.eu().transpose() * &self.up).norm() / self.up.norm().max(1.0);
        let b = (x.dv().transpose() * &self.vp).norm() / self.vp.norm().max(1.0);
        a.max(b)
    }

    /// Re-imposes the gauge conditions when they have drifted beyond `1e-10`.
    pub(crate) fn regauge(mut self, x: &FixedRankPoint) -> Self {
        if self.gauge_error(x) > ORTHO_TOL {
            let cu = x.eu().transpose() * &self.up;
            let cv = x.dv().transpose() * &self.vp;
            self.up -= x.u() * &cu;
            self.eup -= x.eu() * &cu;
            self.vp -= x.v() * &cv;
            self.dvp -= x.dv() * &cv;
        }
        self
    }

    pub(crate) fn from_raw(x: &FixedRankPoint, m: Mat, up: Mat, vp: Mat, eup: Mat, dvp: Mat) -> Self {
        TangentVector { m, up, vp, eup, dvp, base: x.id() }.regauge(x)
    }
}

/// `B`-orthogonal projection of a factored matrix onto the tangent space.
pub fn project(x: &FixedRankPoint, z: &FactoredMatrix) -> Result<TangentVector> {
    if z.rows() != x.rows() || z.cols() != x.cols() {
        return Err(Error::DimensionMismatch("projection operand".into()));
    }
    let a = z.left.transpose() * x.eu();
    let b = z.right.transpose() * x.dv();
    let m = a.transpose() * &b;
    let up = &z.left * &b - x.u() * &m;
    let vp = &z.right * &a - x.v() * m.transpose();
    let eup = x.metric().e.mul(&up);
    let dvp = x.metric().d.mul(&vp);
    Ok(TangentVector::from_raw(x, m, up, vp, eup, dvp))
}

/// Projection of a dense matrix, for tests and oracles.
pub fn project_dense(x: &FixedRankPoint, z: &Mat) -> Result<TangentVector> {
    let n = z.ncols();
    project(x, &FactoredMatrix { left: z.clone(), right: Mat::identity(n, n) })
}

/// Riemannian gradient from a factored Euclidean gradient `Z`.
pub fn riemannian_gradient(x: &FixedRankPoint, z: &FactoredMatrix) -> Result<TangentVector> {
    if z.rows() != x.rows() || z.cols() != x.cols() {
        return Err(Error::DimensionMismatch("gradient operand".into()));
    }
    let a = z.left.transpose() * x.u();
    let b = z.right.transpose() * x.v();
    let m = a.transpose() * &b;
    let eup = &z.left * &b - x.eu() * &m;
    let dvp = &z.right * &a - x.dv() * m.transpose();
    let up = x.metric().e.solve(&eup);
    let vp = x.metric().d.solve(&dvp);
    Ok(TangentVector::from_raw(x, m, up, vp, eup, dvp))
}

/// Vector transport by projection onto the tangent space at `y`.
pub fn transport(y: &FixedRankPoint, x: &FixedRankPoint, xi: &TangentVector) -> Result<TangentVector> {
    if !y.metric().same_as(x.metric()) {
        return Err(Error::MetricMismatch);
    }
    project(y, &xi.embed(x)?)
}
