use crate::error::{Error, Result};
use crate::geometry::{FixedRankPoint, TangentVector, Weight};
use crate::numkit::dense::spd_solve_dense;
use crate::numkit::Mat;

pub(crate) fn require_standard(x: &FixedRankPoint, eta: &TangentVector) -> Result<()> {
    eta.check_base(x)?;
    if !x.metric().is_identity() {
        return Err(Error::MetricMismatch);
    }
    Ok(())
}

/// `X G⁻¹` for a small SPD `G`.
fn right_solve(x: &Mat, g: &Mat) -> Result<Mat> {
    Ok(spd_solve_dense(g, &x.transpose())?.transpose())
}

/// Solves `Proj_X(E ξ D) = η` given `Z V`, `Zᵀ U` and `Uᵀ Z V` of any ambient
/// `Z` with `Proj_X(Z) = η`.
pub(crate) fn kron_core(
    x: &FixedRankPoint,
    m_rhs: &Mat,
    u_full: &Mat,
    v_full: &Mat,
    e: &Weight,
    d: &Weight,
) -> Result<TangentVector> {
    if e.dim() != x.rows() || d.dim() != x.cols() {
        return Err(Error::DimensionMismatch("Kronecker preconditioner factors".into()));
    }
    let (u, v) = (x.u(), x.v());
    let eu = e.mul(u);
    let dv = d.mul(v);
    let gu = u.transpose() * &eu;
    let gv = v.transpose() * &dv;
    let gu = (&gu + gu.transpose()) * 0.5;
    let gv = (&gv + gv.transpose()) * 0.5;

    let mut up = e.solve(u_full);
    up -= u * (u.transpose() * &up);
    let up = right_solve(&up, &gv)?;
    let mut vp = d.solve(v_full);
    vp -= v * (v.transpose() * &vp);
    let vp = right_solve(&vp, &gu)?;

    let inner = m_rhs - eu.transpose() * &up * &gv - &gu * (vp.transpose() * &dv);
    let m = spd_solve_dense(&gu, &right_solve(&inner, &gv)?)?;
    TangentVector::new(x, m, up, vp)
}

/// Inverse of `ξ ↦ Proj_X(E ξ D)` on the tangent space at a point of the
/// standard geometry.
pub fn solve_kron(x: &FixedRankPoint, eta: &TangentVector, e: &Weight, d: &Weight) -> Result<TangentVector> {
    require_standard(x, eta)?;
    let u_full = &eta.up + x.u() * &eta.m;
    let v_full = &eta.vp + x.v() * eta.m.transpose();
    kron_core(x, &eta.m, &u_full, &v_full, e, d)
}
