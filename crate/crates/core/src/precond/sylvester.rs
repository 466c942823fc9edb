use crate::error::{Error, Result};
use crate::geometry::{FixedRankPoint, TangentVector};
use crate::numkit::dense::{lu_solve, spd_solve_dense};
use crate::numkit::{eig_sym, hcat, Mat, SparseMatrix, SpdFactorization, Vector};

use super::kron::require_standard;

/// Largest rank for which the coupled `r² × r²` system is solved directly.
pub const MAX_DIRECT_RANK: usize = 256;

/// Inverse of `ξ ↦ Proj_X(A ξ + ξ B)` in the standard geometry.
pub fn solve_sylvester(
    x: &FixedRankPoint,
    eta: &TangentVector,
    a: &SparseMatrix,
    b: &SparseMatrix,
) -> Result<TangentVector> {
    require_standard(x, eta)?;
    projected_solve(x, eta, a, b)
}

/// Inverse of `ξ ↦ Proj^B_X(E⁻¹A ξ + ξ B D⁻¹)` where `E`, `D` are the weights
/// of the point's metric.
pub fn solve_gen_sylvester(
    x: &FixedRankPoint,
    eta: &TangentVector,
    a: &SparseMatrix,
    b: &SparseMatrix,
) -> Result<TangentVector> {
    eta.check_base(x)?;
    projected_solve(x, eta, a, b)
}

struct Side {
    w: Mat,
    k: Vec<Mat>,
    lam: Vec<Mat>,
}

/// Per-column reductions for one factor. Column `i` solves
/// `(I − EŪŪᵀ) A y + λᵢ E y = rhs` subject to `(EŪ)ᵀ y = 0`.
fn side(
    a: &SparseMatrix,
    e: &SparseMatrix,
    eub: &Mat,
    aub: &Mat,
    own: &Vector,
    shift: &Vector,
    rhs: &Mat,
) -> Result<Side> {
    let r = eub.ncols();
    let mut coupling = aub.clone();
    for j in 0..r {
        let mut c = coupling.column_mut(j);
        c.axpy(-own[j], &eub.column(j), 1.0);
    }
    let mut w = Mat::zeros(eub.nrows(), r);
    let mut k = Vec::with_capacity(r);
    let mut lam = Vec::with_capacity(r);
    for i in 0..r {
        let fac = SpdFactorization::new(&a.axpby(1.0, e, shift[i])?)?;
        let rhs_i = rhs.column(i).into_owned();
        let rhs_i = Mat::from_column_slice(rhs_i.len(), 1, rhs_i.as_slice());
        let sol = fac.solve_many(&hcat(&[eub, &coupling, &rhs_i]));
        let g_eu = sol.columns(0, r).into_owned();
        let neg_s = eub.transpose() * &g_eu;
        let neg_s = (&neg_s + neg_s.transpose()) * 0.5;
        let apply_l = |gy: Mat| -> Result<Mat> {
            let c = spd_solve_dense(&neg_s, &(eub.transpose() * &gy))?;
            Ok(gy - &g_eu * c)
        };
        let ki = apply_l(sol.columns(r, r).into_owned())?;
        let wi = apply_l(sol.columns(2 * r, 1).into_owned())?;
        w.column_mut(i).copy_from(&wi.column(0));
        let mut li = -(aub.transpose() * &ki);
        for j in 0..r {
            li[(j, j)] += shift[i];
        }
        lam.push(li);
        k.push(ki);
    }
    Ok(Side { w, k, lam })
}

fn projected_solve(
    x: &FixedRankPoint,
    eta: &TangentVector,
    a: &SparseMatrix,
    b: &SparseMatrix,
) -> Result<TangentVector> {
    let (m, n, r) = (x.rows(), x.cols(), x.rank());
    if a.nrows() != m || b.nrows() != n {
        return Err(Error::DimensionMismatch("Sylvester coefficients".into()));
    }
    if r > MAX_DIRECT_RANK {
        return Err(Error::InvalidArgument(format!("rank {r} exceeds direct-solve limit {MAX_DIRECT_RANK}")));
    }
    let metric = x.metric();
    let (e, d) = (metric.e.sparse(), metric.d.sparse());

    let au = a.mul_dense(x.u());
    let bv = b.mul_dense(x.v());
    let pa = x.u().transpose() * &au;
    let pb = x.v().transpose() * &bv;
    let (qa, la) = eig_sym(&((&pa + pa.transpose()) * 0.5))?;
    let (qb, lb) = eig_sym(&((&pb + pb.transpose()) * 0.5))?;

    let eub = x.eu() * &qa;
    let aub = &au * &qa;
    let dvb = x.dv() * &qb;
    let bvb = &bv * &qb;
    let mb = qa.transpose() * &eta.m * &qb;

    let su = side(a, &e, &eub, &aub, &la, &lb, &(&eta.eup * &qb))?;
    let sv = side(b, &d, &dvb, &bvb, &lb, &la, &(&eta.dvp * &qa))?;
    let rhs = mb - aub.transpose() * &su.w - (bvb.transpose() * &sv.w).transpose();

    // Column-major vec(M̄): entry (a, i) sits at a + i r.
    let mut sys = Mat::zeros(r * r, r * r);
    for i in 0..r {
        for p in 0..r {
            for q in 0..r {
                sys[(p + i * r, q + i * r)] += su.lam[i][(p, q)];
                sys[(p + i * r, p + q * r)] += sv.lam[p][(i, q)];
            }
        }
    }
    let rhs_vec = Mat::from_column_slice(r * r, 1, rhs.as_slice());
    let sol = lu_solve(&sys, &rhs_vec)
        .map_err(|_| Error::Singular("projected Sylvester coupling system".into()))?;
    let mx = Mat::from_column_slice(r, r, sol.as_slice());

    let mut ux = su.w;
    let mut vx = sv.w;
    for i in 0..r {
        let cu = &su.k[i] * mx.column(i);
        ux.column_mut(i).axpy(-1.0, &cu, 1.0);
        let cv = &sv.k[i] * mx.row(i).transpose();
        vx.column_mut(i).axpy(-1.0, &cv, 1.0);
    }
    let up = ux * qb.transpose();
    let vp = vx * qa.transpose();
    let mm = &qa * mx * qb.transpose();
    TangentVector::new(x, mm, up, vp)
}
