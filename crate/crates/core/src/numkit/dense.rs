//! Dense kernels on column-major `f64` matrices.
//!
//! Thin wrappers over nalgebra's decompositions that pin down the ordering
//! and sign conventions the rest of the crate relies on.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Column-major dense matrix.
pub type Mat = DMatrix<f64>;
/// Dense column vector.
pub type Vector = DVector<f64>;

const MAX_ITER: usize = 1_000_000;
/// Convergence threshold handed to nalgebra; tighter values can stall the
/// bidiagonal QR sweep on rank-deficient input and return inaccurate factors.
const SVD_EPS: f64 = 5.0 * f64::EPSILON;

/// Thin SVD `A = U diag(s) Vᵀ` with `s` nonincreasing.
///
/// The first nonzero entry of every left singular vector is made
/// nonnegative so that repeated runs agree bit for bit.
pub fn svd_thin(a: &Mat) -> Result<(Mat, Vector, Mat)> {
    let (m, n) = a.shape();
    let p = m.min(n);
    if p == 0 {
        return Ok((Mat::zeros(m, 0), Vector::zeros(0), Mat::zeros(n, 0)));
    }
    let (u, s, vt) = match SVD::try_new(a.clone(), true, true, SVD_EPS, MAX_ITER) {
        Some(SVD { u: Some(u), v_t: Some(vt), singular_values: s }) => {
            let rec = &u * Mat::from_diagonal(&s) * &vt;
            if (rec - a).norm() <= 1e-12 * a.norm() {
                (u, s, vt)
            } else {
                jacobi_svd(a)?
            }
        }
        _ => jacobi_svd(a)?,
    };

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));

    let mut uo = Mat::zeros(m, p);
    let mut vo = Mat::zeros(n, p);
    let mut so = Vector::zeros(p);
    for (dst, &src) in order.iter().enumerate() {
        let sign = leading_sign(u.column(src).iter());
        so[dst] = s[src].max(0.0);
        for i in 0..m {
            uo[(i, dst)] = sign * u[(i, src)];
        }
        for i in 0..n {
            vo[(i, dst)] = sign * vt[(src, i)];
        }
    }
    Ok((uo, so, vo))
}

/// One-sided Jacobi SVD, used when the bidiagonal solver loses accuracy.
fn jacobi_svd(a: &Mat) -> Result<(Mat, Vector, Mat)> {
    if a.nrows() < a.ncols() {
        let (u, s, vt) = jacobi_svd(&a.transpose())?;
        return Ok((vt.transpose(), s, u.transpose()));
    }
    let n = a.ncols();
    let mut w = a.clone();
    let mut v = Mat::identity(n, n);
    let mut converged = false;
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                for mat in [&mut w, &mut v] {
                    for i in 0..mat.nrows() {
                        let x = mat[(i, p)];
                        let y = mat[(i, q)];
                        mat[(i, p)] = c * x - sn * y;
                        mat[(i, q)] = sn * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence("svd"));
    }
    let s = Vector::from_fn(n, |j, _| w.column(j).norm());
    let smax = s.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..n).filter(|&j| s[j] > 1e-13 * smax && s[j] > 0.0).collect();
    let mut u = Mat::zeros(a.nrows(), n);
    for &j in &keep {
        u.set_column(j, &(w.column(j) / s[j]));
    }
    if keep.len() < n {
        // orthonormal completion for numerically null directions
        let good = Mat::from_fn(a.nrows(), keep.len(), |i, k| u[(i, keep[k])]);
        let (q, _) = qr_thin(&hcat(&[&good, &Mat::identity(a.nrows(), a.nrows())]));
        let mut next = keep.len();
        for j in (0..n).filter(|j| !keep.contains(j)) {
            u.set_column(j, &q.column(next));
            next += 1;
        }
    }
    Ok((u, s, v.transpose()))
}

fn leading_sign<'a>(mut it: impl Iterator<Item = &'a f64>) -> f64 {
    match it.find(|x| x.abs() > 0.0) {
        Some(x) if *x < 0.0 => -1.0,
        _ => 1.0,
    }
}

/// Thin Householder QR with `R_ii ≥ 0`.
///
/// For `cols > rows` the factors are `Q: rows×rows`, `R: rows×cols`.
pub fn qr_thin(a: &Mat) -> (Mat, Mat) {
    let (m, n) = a.shape();
    let p = m.min(n);
    if p == 0 {
        return (Mat::zeros(m, 0), Mat::zeros(0, n));
    }
    let qr = a.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for k in 0..p {
        if r[(k, k)] < 0.0 {
            r.row_mut(k).neg_mut();
            q.column_mut(k).neg_mut();
        }
    }
    (q, r)
}

/// Symmetric eigendecomposition `A = Q diag(λ) Qᵀ`, eigenvalues ascending.
pub fn eig_sym(a: &Mat) -> Result<(Mat, Vector)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "eig_sym needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok((Mat::zeros(0, 0), Vector::zeros(0)));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, MAX_ITER)
        .ok_or(Error::NoConvergence("symmetric eigensolver"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .total_cmp(&eig.eigenvalues[j])
            .then(i.cmp(&j))
    });
    let mut q = Mat::zeros(n, n);
    let mut lam = Vector::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        lam[dst] = eig.eigenvalues[src];
        let sign = leading_sign(eig.eigenvectors.column(src).iter());
        for i in 0..n {
            q[(i, dst)] = sign * eig.eigenvectors[(i, src)];
        }
    }
    Ok((q, lam))
}

/// Frobenius inner product `⟨A, B⟩ = tr(AᵀB)`.
pub fn inner(a: &Mat, b: &Mat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Dense Cholesky solve helper for small SPD systems.
pub fn spd_solve_dense(a: &Mat, b: &Mat) -> Result<Mat> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("dense SPD system".into()))?;
    Ok(chol.solve(b))
}

/// `A⁻¹ B` through LU with partial pivoting.
pub fn lu_solve(a: &Mat, b: &Mat) -> Result<Mat> {
    let lu = a.clone().lu();
    lu.solve(b)
        .ok_or_else(|| Error::Singular(format!("{}x{} dense system", a.nrows(), a.ncols())))
}

/// Horizontal concatenation `[A | B | ...]`; all blocks share the row count.
pub fn hcat(blocks: &[&Mat]) -> Mat {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hcat row mismatch");
        out.columns_mut(c0, b.ncols()).copy_from(*b);
        c0 += b.ncols();
    }
    out
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Column-major vectorization.
pub fn vec_of(a: &Mat) -> Vector {
    Vector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &Vector, rows: usize, cols: usize) -> Mat {
    Mat::from_column_slice(rows, cols, v.as_slice())
}
