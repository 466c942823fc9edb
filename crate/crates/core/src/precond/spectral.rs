use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numkit::{eig_sym, Mat, SparseMatrix, SpdFactorization};
use crate::oracle::random_mat;

/// Lanczos steps used per extreme eigenvalue.
pub const LANCZOS_STEPS: usize = 30;
const LOWER_SAFETY: f64 = 0.9;
const UPPER_SAFETY: f64 = 1.1;

/// Largest Ritz value of a symmetric operator after at most `steps` Lanczos
/// steps with full reorthogonalization. `None` on numerical failure.
fn lanczos_max(n: usize, steps: usize, op: impl Fn(&Mat) -> Mat) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut q = random_mat(n, 1, &mut rng);
    q /= q.norm();
    let k = steps.min(n);
    let mut basis: Vec<Mat> = Vec::with_capacity(k);
    let mut alpha = Vec::with_capacity(k);
    let mut beta: Vec<f64> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut w = op(&q);
        let a = q.dot(&w);
        alpha.push(a);
        basis.push(q.clone());
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w -= b * c;
            }
        }
        let bn = w.norm();
        if !bn.is_finite() || !a.is_finite() {
            return None;
        }
        if bn <= 1e-12 * a.abs().max(1e-300) || basis.len() == k {
            break;
        }
        beta.push(bn);
        q = w / bn;
    }
    let s = alpha.len();
    let mut t = Mat::zeros(s, s);
    for i in 0..s {
        t[(i, i)] = alpha[i];
        if i + 1 < s {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let (_, ev) = eig_sym(&t).ok()?;
    ev.iter().cloned().fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
}

/// Interval `[a, b]` enclosing the eigenvalues of the pencil `(A, E)`.
///
/// The upper end comes from Lanczos on `C⁻ᵀ A C⁻¹` (`E = CᵀC`), the lower end
/// from Lanczos on the inverse `C A⁻¹ Cᵀ`; both are widened by 10%. If either
/// run breaks down numerically, Gershgorin bounds are used.
pub fn spectral_interval(a: &SparseMatrix, e: &SparseMatrix) -> Result<(f64, f64)> {
    let n = a.nrows();
    if e.nrows() != n || a.ncols() != n || e.ncols() != n {
        return Err(Error::DimensionMismatch("pencil shapes".into()));
    }
    let fe = SpdFactorization::new(e)?;
    let fa = SpdFactorization::new(a)?;
    let hi = lanczos_max(n, LANCZOS_STEPS, |v| fe.ct_inv(&a.mul_dense(&fe.c_inv(v))));
    let inv_lo = lanczos_max(n, LANCZOS_STEPS, |v| fe.c_mul(&fa.solve_many(&fe.ct_mul(v))));
    match (hi, inv_lo) {
        (Some(h), Some(il)) if h > 0.0 && il > 0.0 => Ok((LOWER_SAFETY / il, UPPER_SAFETY * h)),
        _ => gershgorin_interval(a, e),
    }
}

fn gershgorin_interval(a: &SparseMatrix, e: &SparseMatrix) -> Result<(f64, f64)> {
    let (alo, ahi) = a.gershgorin();
    let (elo, ehi) = e.gershgorin();
    if !(alo > 0.0 && elo > 0.0) {
        return Err(Error::NoConvergence("spectral interval estimation"));
    }
    Ok((alo / ehi, ahi / elo))
}
