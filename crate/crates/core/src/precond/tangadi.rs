use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{FixedRankPoint, TangentVector, Weight};
use crate::numkit::{hcat, SparseMatrix};

use super::kron::{kron_core, require_standard};
use super::shifts::ShiftSet;

/// ADI-type iteration on the tangent space approximating the inverse of
/// `ξ ↦ Proj_X(A ξ D + E ξ B)`.
///
/// Step `j` with shifts `(p, q)` solves
/// `Proj_X((A − qE) ξ⁺ (B + pD)) = Proj_X((A − pE) ξ (B + qD)) + (p − q) η`.
#[derive(Debug, Clone)]
pub struct TangAdi {
    a: SparseMatrix,
    b: SparseMatrix,
    e: SparseMatrix,
    d: SparseMatrix,
    shifts: ShiftSet,
    steps: usize,
    /// `(A − q_j E, B + p_j D)` per shift pair, factorized once.
    shifted: Vec<(Weight, Weight)>,
}

impl TangAdi {
    /// Factorizes all shifted matrices up front; fails if a shift pair makes
    /// one of them indefinite.
    pub fn new(
        a: &SparseMatrix,
        b: &SparseMatrix,
        e: &SparseMatrix,
        d: &SparseMatrix,
        shifts: ShiftSet,
        steps: usize,
    ) -> Result<Self> {
        if a.nrows() != e.nrows() || b.nrows() != d.nrows() {
            return Err(Error::DimensionMismatch("tangADI coefficients".into()));
        }
        if shifts.is_empty() || steps == 0 {
            return Err(Error::InvalidArgument("tangADI needs shifts and at least one step".into()));
        }
        let mut left: HashMap<u64, Weight> = HashMap::new();
        let mut right: HashMap<u64, Weight> = HashMap::new();
        let mut shifted = Vec::with_capacity(shifts.len());
        for &(p, q) in &shifts.pairs {
            if !left.contains_key(&q.to_bits()) {
                left.insert(q.to_bits(), Weight::new(&a.axpby(1.0, e, -q)?)?);
            }
            if !right.contains_key(&p.to_bits()) {
                right.insert(p.to_bits(), Weight::new(&b.axpby(1.0, d, p)?)?);
            }
            shifted.push((left[&q.to_bits()].clone(), right[&p.to_bits()].clone()));
        }
        Ok(TangAdi { a: a.clone(), b: b.clone(), e: e.clone(), d: d.clone(), shifts, steps, shifted })
    }

    pub fn shifts(&self) -> &ShiftSet {
        &self.shifts
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One update from `prev` using shift pair `j` (cycled).
    pub fn step(
        &self,
        x: &FixedRankPoint,
        eta: &TangentVector,
        prev: &TangentVector,
        j: usize,
    ) -> Result<TangentVector> {
        require_standard(x, eta)?;
        prev.check_base(x)?;
        if self.a.nrows() != x.rows() || self.b.nrows() != x.cols() {
            return Err(Error::DimensionMismatch("tangADI point".into()));
        }
        let j = j % self.shifts.len();
        let (p, q) = self.shifts.pairs[j];
        let (u, v) = (x.u(), x.v());

        // ξ = Y Wᵀ with Y = [U, U_p], W = [V Mᵀ + V_p, V].
        let y = hcat(&[u, &prev.up]);
        let w = hcat(&[&(v * prev.m.transpose() + &prev.vp), v]);
        let ay = self.a.mul_dense(&y) - self.e.mul_dense(&y) * p;
        let bw = self.b.mul_dense(&w) + self.d.mul_dense(&w) * q;
        let zv = &ay * (bw.transpose() * v);
        let ztu = &bw * (ay.transpose() * u);

        let s = p - q;
        let u_full = &zv + (&eta.up + u * &eta.m) * s;
        let v_full = &ztu + (&eta.vp + v * eta.m.transpose()) * s;
        let m_rhs = u.transpose() * &zv + &eta.m * s;
        let (el, dr) = &self.shifted[j];
        kron_core(x, &m_rhs, &u_full, &v_full, el, dr)
    }

    /// `steps` updates starting from zero.
    pub fn apply(&self, x: &FixedRankPoint, eta: &TangentVector) -> Result<TangentVector> {
        let mut xi = TangentVector::zero(x);
        for j in 0..self.steps {
            xi = self.step(x, eta, &xi, j)?;
        }
        Ok(xi)
    }
}
