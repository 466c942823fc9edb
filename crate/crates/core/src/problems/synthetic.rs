use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::geometry::FactoredMatrix;
use crate::numkit::SparseMatrix;
use crate::operator::MultitermOperator;
use crate::oracle::random_mat;

use super::{PrecondRecipe, ProblemInstance};

/// Random symmetric tridiagonal matrix with diagonal `shift + Σ|offdiag|`.
fn dominant_tridiag(n: usize, shift: f64, rng: &mut ChaCha8Rng) -> SparseMatrix {
    let off: Vec<f64> = (1..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let diag: Vec<f64> = (0..n)
        .map(|i| {
            let l = if i > 0 { off[i - 1].abs() } else { 0.0 };
            let r = if i + 1 < n { off[i].abs() } else { 0.0 };
            shift + l + r + rng.gen_range(0.0..1.0)
        })
        .collect();
    SparseMatrix::sym_tridiag(&diag, &off)
}

/// Small random SPD instance: a dominant first term `A₁ ⊗ B₁` with SPD
/// tridiagonal factors, plus `ℓ − 1` terms `coupling · Nᵢ ⊗ Mᵢ` with
/// positive semidefinite factors, and a Gaussian right-hand side of rank
/// `rank_f`. The first term is offered as the `P1` preconditioner.
pub fn gen_synthetic(m: usize, n: usize, l: usize, coupling: f64, rank_f: usize, seed: u64) -> Result<ProblemInstance> {
    if m == 0 || n == 0 || l == 0 || rank_f == 0 {
        return Err(Error::InvalidArgument("empty synthetic instance".into()));
    }
    if !(coupling >= 0.0) {
        return Err(Error::InvalidArgument("coupling must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a1 = dominant_tridiag(m, 1.0, &mut rng);
    let b1 = dominant_tridiag(n, 1.0, &mut rng);
    let mut a = vec![a1.clone()];
    let mut b = vec![b1.clone()];
    for _ in 1..l {
        a.push(dominant_tridiag(m, 0.0, &mut rng).scaled(coupling));
        b.push(dominant_tridiag(n, 0.0, &mut rng));
    }
    let op = MultitermOperator::new(a, b)?;
    let rhs = FactoredMatrix::new(random_mat(m, rank_f, &mut rng), random_mat(n, rank_f, &mut rng))?;
    let mut inst = ProblemInstance::new("synthetic", op, rhs)?;
    inst.p1 = Some(PrecondRecipe::Kron { e: a1, d: b1 });
    inst.meta.insert("seed".into(), json!(seed));
    inst.meta.insert("coupling".into(), json!(coupling));
    Ok(inst)
}

/// `X = F` with a Gaussian right-hand side of rank `rank_f`.
pub fn identity_instance(m: usize, n: usize, rank_f: usize, seed: u64) -> Result<ProblemInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let op = MultitermOperator::new(vec![SparseMatrix::identity(m)], vec![SparseMatrix::identity(n)])?;
    let rhs = FactoredMatrix::new(random_mat(m, rank_f, &mut rng), random_mat(n, rank_f, &mut rng))?;
    let mut inst = ProblemInstance::new("identity", op, rhs)?;
    inst.meta.insert("seed".into(), json!(seed));
    Ok(inst)
}
