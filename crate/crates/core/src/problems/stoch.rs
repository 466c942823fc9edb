use std::f64::consts::PI;
use std::sync::Arc;

use serde_json::json;

use crate::error::{Error, Result};
use crate::geometry::FactoredMatrix;
use crate::numkit::{Mat, SparseMatrix, SpdFactorization};
use crate::operator::MultitermOperator;

use super::fd::stiffness_2d;
use super::legendre::{gauss_legendre, LegendreProducts};
use super::{PrecondRecipe, ProblemInstance};

pub type Coef2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Max of `|a|` over grid nodes and half-points of the `n × n` grid.
fn sup_norm(n: usize, a: &dyn Fn(f64, f64) -> f64) -> f64 {
    let k = 2 * (n + 1);
    let h = 1.0 / k as f64;
    let mut m = 0.0f64;
    for i in 0..=k {
        for j in 0..=k {
            m = m.max(a(i as f64 * h, j as f64 * h).abs());
        }
    }
    m
}

/// `∫_{[0,1]²} a` by 24×24 tensor Gauss–Legendre quadrature.
fn integral(a: &dyn Fn(f64, f64) -> f64) -> Result<f64> {
    let (x, w) = gauss_legendre(24)?;
    let mut s = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        for (yj, wj) in x.iter().zip(&w) {
            s += 0.25 * wi * wj * a(0.5 * (xi + 1.0), 0.5 * (yj + 1.0));
        }
    }
    Ok(s)
}

/// Stochastic Galerkin system `K₀X + Σ_k K_k X G_kᵀ = f₀ g₀ᵀ` for
/// `−∇·(a∇u) = f` with `a = a₀ + Σ a_k(x) y_k`, `y ∈ [−1, 1]^q` uniform.
///
/// The spatial stiffness matrices come from the five-point finite-difference
/// scheme on an `n × n` interior grid of the unit square; the parametric space
/// is spanned by tensor Legendre polynomials of total degree at most `p`.
pub fn gen_stoch_galerkin(
    n: usize,
    p: usize,
    a0: f64,
    ak: &[Coef2],
    f: &dyn Fn(f64, f64) -> f64,
) -> Result<ProblemInstance> {
    let q = ak.len();
    if n < 2 || q == 0 || p == 0 {
        return Err(Error::InvalidArgument("need n ≥ 2, q ≥ 1, p ≥ 1".into()));
    }
    let sup: f64 = ak.iter().map(|a| sup_norm(n, &**a)).sum();
    if !(a0 > sup) {
        return Err(Error::InvalidArgument(format!(
            "ellipticity violated: a₀ = {a0} ≤ Σ‖a_k‖∞ = {sup}"
        )));
    }
    let leg = LegendreProducts::new(q, p, p + 2)?;
    let np = leg.dim();
    let k0 = stiffness_2d(n, &|_, _| a0)?;
    let mut a = vec![k0.clone()];
    let mut b = vec![SparseMatrix::identity(np)];
    let mut gs = Vec::with_capacity(q);
    for (k, ak) in ak.iter().enumerate() {
        a.push(stiffness_2d(n, &**ak)?);
        let g = leg.g(k)?;
        b.push(g.clone());
        gs.push(g);
    }
    let op = MultitermOperator::new(a, b)?;

    let h = 1.0 / (n + 1) as f64;
    let mut f0 = Mat::zeros(n * n, 1);
    for j in 0..n {
        for i in 0..n {
            f0[(i + j * n, 0)] = f((i + 1) as f64 * h, (j + 1) as f64 * h);
        }
    }
    let mut g0 = Mat::zeros(np, 1);
    g0[(0, 0)] = 1.0;
    let mut inst = ProblemInstance::new("stoch-galerkin", op, FactoredMatrix::new(f0, g0)?)?;

    let mut gbar = SparseMatrix::identity(np);
    for (k, g) in gs.iter().enumerate() {
        let mean = integral(&*ak[k])?;
        // Quadrature roundoff on mean-zero coefficients is not a real average.
        if mean.abs() > 1e-13 * sup_norm(n, &*ak[k]) {
            gbar = gbar.axpby(1.0, g, mean / a0)?;
        }
    }
    SpdFactorization::new(&gbar)
        .map_err(|_| Error::InvalidArgument("averaged parametric matrix is not SPD".into()))?;
    inst.p1 = Some(PrecondRecipe::Kron { e: k0.clone(), d: SparseMatrix::identity(np) });
    inst.p2 = Some(PrecondRecipe::Kron { e: k0, d: gbar });
    inst.meta.insert("n".into(), json!(n));
    inst.meta.insert("q".into(), json!(q));
    inst.meta.insert("p".into(), json!(p));
    inst.meta.insert("parametric_dim".into(), json!(np));
    Ok(inst)
}

/// `(P1, P2)` of a stochastic Galerkin instance: `K₀ X` and `K₀ X G` with
/// `G = I + Σ (ā_k/a₀) G_k`.
pub fn stoch_galerkin_preconditioners(inst: &ProblemInstance) -> Result<(PrecondRecipe, PrecondRecipe)> {
    match (&inst.p1, &inst.p2) {
        (Some(p1), Some(p2)) if inst.family == "stoch-galerkin" => Ok((p1.clone(), p2.clone())),
        _ => Err(Error::InvalidArgument("not a stochastic Galerkin instance".into())),
    }
}

/// Default desk-scale instance: `a₀ = 1`, `f ≡ 1` and
/// `a_k(x, y) = s_k (1 + cos(kπx) cos(kπy)) / 2` with `s_k = 0.3·0.7^{k−1}`,
/// so `Σ‖a_k‖∞ < 1` and every `a_k` has mean `s_k/2`.
pub fn stoch_galerkin_default(n: usize, q: usize, p: usize) -> Result<ProblemInstance> {
    let ak: Vec<Coef2> = (1..=q)
        .map(|k| {
            let s = 0.3 * 0.7f64.powi(k as i32 - 1);
            let w = k as f64 * PI;
            Arc::new(move |x: f64, y: f64| 0.5 * s * (1.0 + (w * x).cos() * (w * y).cos())) as Coef2
        })
        .collect();
    gen_stoch_galerkin(n, p, 1.0, &ak, &|_, _| 1.0)
}
