//! Dense reference computations for small instances.
//!
//! Everything here forms `mn × mn` matrices and is meant for tests and the
//! `verify` command only.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::geometry::{FixedRankPoint, KroneckerMetric, TangentVector};
use crate::numkit::{dense::vec_of, dense::unvec, svd_thin, Mat, SparseMatrix, Vector};

pub fn random_mat<R: Rng>(m: usize, n: usize, rng: &mut R) -> Mat {
    Mat::from_fn(m, n, |_, _| rng.sample(StandardNormal))
}

/// Dense random SPD matrix `G Gᵀ/n + shift·I`.
pub fn random_spd_dense<R: Rng>(n: usize, shift: f64, rng: &mut R) -> Mat {
    let g = random_mat(n, n, rng);
    let mut a = &g * g.transpose() / n as f64 + Mat::identity(n, n) * shift;
    a = (&a + a.transpose()) * 0.5;
    a
}

pub fn random_spd<R: Rng>(n: usize, rng: &mut R) -> SparseMatrix {
    SparseMatrix::from_dense(&random_spd_dense(n, 0.5, rng))
}

/// `D ⊗ E`, the matrix of `X ↦ E X D` on column-major vectorizations.
pub fn metric_matrix(metric: &KroneckerMetric) -> Mat {
    metric.d.dense().kronecker(&metric.e.dense())
}

/// Euclidean-orthonormal basis of the tangent space at `x`, one column per
/// basis matrix (column-major vectorized).
pub fn tangent_basis(x: &FixedRankPoint) -> Result<Mat> {
    let (m, n, r) = (x.rows(), x.cols(), x.rank());
    let mut span = Mat::zeros(m * n, r * (m + n));
    let mut c = 0;
    for i in 0..r {
        for b in 0..n {
            let mut z = Mat::zeros(m, n);
            z.column_mut(b).copy_from(&x.u().column(i));
            span.column_mut(c).copy_from(&vec_of(&z));
            c += 1;
        }
    }
    for j in 0..r {
        for a in 0..m {
            let mut z = Mat::zeros(m, n);
            for b in 0..n {
                z[(a, b)] = x.v()[(b, j)];
            }
            span.column_mut(c).copy_from(&vec_of(&z));
            c += 1;
        }
    }
    let (u, _, _) = svd_thin(&span)?;
    let d = r * (m + n - r);
    Ok(u.columns(0, d).into_owned())
}

/// `B`-orthogonal projection onto the tangent space, in dense form.
pub fn project_oracle(x: &FixedRankPoint, z: &Mat) -> Result<Mat> {
    let t = tangent_basis(x)?;
    let k = metric_matrix(x.metric());
    let g = t.transpose() * &k * &t;
    let rhs = t.transpose() * &k * vec_of(z);
    let rhs = Mat::from_column_slice(rhs.len(), 1, rhs.as_slice());
    let c = crate::numkit::dense::spd_solve_dense(&g, &rhs)?;
    let v = &t * c;
    Ok(Mat::from_column_slice(z.nrows(), z.ncols(), v.as_slice()))
}

/// Coordinates of a tangent vector in the basis returned by [`tangent_basis`].
pub fn coords(t: &Mat, x: &FixedRankPoint, xi: &TangentVector) -> Result<Vector> {
    Ok(t.transpose() * vec_of(&xi.dense(x)?))
}

/// Tangent vector whose dense form is `T c`.
pub fn from_coords(t: &Mat, x: &FixedRankPoint, c: &Vector) -> Result<TangentVector> {
    let z = unvec(&(t * c), x.rows(), x.cols());
    crate::geometry::project_dense(x, &z)
}

/// Random tangent vector at `x`.
pub fn random_tangent<R: Rng>(x: &FixedRankPoint, rng: &mut R) -> Result<TangentVector> {
    let r = x.rank();
    TangentVector::new(
        x,
        random_mat(r, r, rng),
        random_mat(x.rows(), r, rng),
        random_mat(x.cols(), r, rng),
    )
}

/// `ξ` with `T (TᵀPT)⁻¹ (TᵀKT) c_η`, the dense solution of `Proj^B(K⁻¹P ξ) = η`
/// where `K` is the metric matrix at `x` and `P` any SPD `mn × mn` matrix.
pub fn dense_precond_solve(x: &FixedRankPoint, eta: &TangentVector, p: &Mat) -> Result<TangentVector> {
    let t = tangent_basis(x)?;
    let k = metric_matrix(x.metric());
    let c = coords(&t, x, eta)?;
    let pt = t.transpose() * p * &t;
    let rhs = t.transpose() * &k * &t * c;
    let rhs = Mat::from_column_slice(rhs.len(), 1, rhs.as_slice());
    let sol = crate::numkit::dense::lu_solve(&pt, &rhs)?;
    from_coords(&t, x, &Vector::from_column_slice(sol.as_slice()))
}

/// Eigenvalues of the symmetric-definite pencil `(N, G)`, ascending.
pub fn pencil_eigenvalues(n: &Mat, g: &Mat) -> Result<Vector> {
    let chol = g.clone().cholesky().ok_or(crate::error::Error::Singular("pencil".into()))?;
    let l = chol.l();
    let li = l.clone().try_inverse().ok_or(crate::error::Error::Singular("pencil".into()))?;
    let s = &li * n * li.transpose();
    let (_, ev) = crate::numkit::eig_sym(&((&s + s.transpose()) * 0.5))?;
    Ok(ev)
}

/// Spectral radius of `G⁻¹N` for symmetric `N` and SPD `G`.
pub fn pencil_spectral_radius(n: &Mat, g: &Mat) -> Result<f64> {
    Ok(pencil_eigenvalues(n, g)?.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}
