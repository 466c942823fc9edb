use std::sync::Arc;

use serde_json::json;

use crate::error::{Error, Result};
use crate::geometry::FactoredMatrix;
use crate::numkit::{Mat, SparseMatrix};
use crate::operator::MultitermOperator;

use super::{PrecondRecipe, ProblemInstance};

pub type Coef1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One separable term `α k_x(x) k_y(y)` of the diffusion coefficient.
#[derive(Clone)]
pub struct SeparableTerm {
    pub alpha: f64,
    pub kx: Coef1,
    pub ky: Coef1,
}

impl std::fmt::Debug for SeparableTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SeparableTerm {{ alpha: {} }}", self.alpha)
    }
}

fn positive(v: f64, what: &str, at: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidArgument(format!("{what} coefficient {v} at {at} is not positive")))
    }
}

/// `(1/h²) tridiag(−k(x_{i−½}), k(x_{i−½}) + k(x_{i+½}), −k(x_{i+½}))` on `n`
/// interior nodes of `[0, 1]`.
pub fn stiffness_1d(n: usize, k: &dyn Fn(f64) -> f64) -> Result<SparseMatrix> {
    let h = 1.0 / (n + 1) as f64;
    let half: Vec<f64> = (0..=n)
        .map(|i| {
            let x = (i as f64 + 0.5) * h;
            positive(k(x), "half-grid", x)
        })
        .collect::<Result<_>>()?;
    let s = 1.0 / (h * h);
    let diag: Vec<f64> = (0..n).map(|i| s * (half[i] + half[i + 1])).collect();
    let off: Vec<f64> = (1..n).map(|i| -s * half[i]).collect();
    Ok(SparseMatrix::sym_tridiag(&diag, &off))
}

/// `diag(k(x_1), …, k(x_n))`.
pub fn nodal_1d(n: usize, k: &dyn Fn(f64) -> f64) -> Result<SparseMatrix> {
    let h = 1.0 / (n + 1) as f64;
    let d: Vec<f64> = (1..=n)
        .map(|i| {
            let x = i as f64 * h;
            positive(k(x), "nodal", x)
        })
        .collect::<Result<_>>()?;
    Ok(SparseMatrix::diag(&d))
}

/// Five-point flux-form stiffness `−∇·(a∇u)` on the `n × n` interior grid of
/// the unit square with homogeneous Dirichlet conditions; node `(i, j)` has
/// index `i + j n`. The coefficient may change sign.
pub fn stiffness_2d(n: usize, a: &dyn Fn(f64, f64) -> f64) -> Result<SparseMatrix> {
    let h = 1.0 / (n + 1) as f64;
    let s = 1.0 / (h * h);
    let mut t = Vec::with_capacity(5 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (x, y) = ((i + 1) as f64 * h, (j + 1) as f64 * h);
            let row = i + j * n;
            let fluxes = [
                (a(x - 0.5 * h, y), i.checked_sub(1).map(|ii| ii + j * n)),
                (a(x + 0.5 * h, y), (i + 1 < n).then(|| i + 1 + j * n)),
                (a(x, y - 0.5 * h), j.checked_sub(1).map(|jj| i + jj * n)),
                (a(x, y + 0.5 * h), (j + 1 < n).then(|| i + (j + 1) * n)),
            ];
            let mut diag = 0.0;
            for (k, nb) in fluxes {
                if !k.is_finite() {
                    return Err(Error::InvalidArgument(format!("coefficient not finite at ({x}, {y})")));
                }
                diag += k;
                if let Some(c) = nb {
                    t.push((row, c, -s * k));
                }
            }
            t.push((row, row, s * diag));
        }
    }
    SparseMatrix::from_triplets(n * n, n * n, &t)
}

/// Finite-difference discretization of `−∇·(k∇u) = 0` on the unit square with
/// `u = g` on the boundary and `k = Σ αⱼ k_{j,x}(x) k_{j,y}(y)`. Unknowns
/// `U[s, t] ≈ u(x_s, y_t)`; each separable term contributes
/// `αⱼ (A_{j,x} U D_{j,y} + D_{j,x} U A_{j,y})`.
pub fn gen_fd_diffusion(
    n: usize,
    terms: &[SeparableTerm],
    g: &dyn Fn(f64, f64) -> f64,
) -> Result<ProblemInstance> {
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 interior nodes".into()));
    }
    if terms.is_empty() {
        return Err(Error::InvalidArgument("no coefficient terms".into()));
    }
    let mut a = Vec::with_capacity(2 * terms.len());
    let mut b = Vec::with_capacity(2 * terms.len());
    for t in terms {
        if !(t.alpha >= 0.0 && t.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("term weight {} is negative", t.alpha)));
        }
        let (ax, dx) = (stiffness_1d(n, &*t.kx)?, nodal_1d(n, &*t.kx)?);
        let (ay, dy) = (stiffness_1d(n, &*t.ky)?, nodal_1d(n, &*t.ky)?);
        a.push(ax.scaled(t.alpha));
        b.push(dy);
        a.push(dx.scaled(t.alpha));
        b.push(ay);
    }
    let op = MultitermOperator::new(a, b)?;

    let h = 1.0 / (n + 1) as f64;
    let k = |x: f64, y: f64| terms.iter().map(|t| t.alpha * (t.kx)(x) * (t.ky)(y)).sum::<f64>();
    let node = |i: usize| (i + 1) as f64 * h;
    let bl: Vec<f64> = (0..n).map(|j| k(0.5 * h, node(j)) * g(0.0, node(j))).collect();
    let br: Vec<f64> = (0..n).map(|j| k(1.0 - 0.5 * h, node(j)) * g(1.0, node(j))).collect();
    let bd: Vec<f64> = (0..n).map(|i| k(node(i), 0.5 * h) * g(node(i), 0.0)).collect();
    let bu: Vec<f64> = (0..n).map(|i| k(node(i), 1.0 - 0.5 * h) * g(node(i), 1.0)).collect();
    let s = 1.0 / (h * h);
    let mut left = Mat::zeros(n, 4);
    let mut right = Mat::zeros(n, 4);
    left[(0, 0)] = s;
    left[(n - 1, 1)] = s;
    for i in 0..n {
        right[(i, 0)] = bl[i];
        right[(i, 1)] = br[i];
        left[(i, 2)] = s * bd[i];
        left[(i, 3)] = s * bu[i];
    }
    right[(0, 2)] = 1.0;
    right[(n - 1, 3)] = 1.0;
    let rhs = FactoredMatrix::new(left, right)?;
    let mut inst = ProblemInstance::new("fd-diffusion", op, rhs)?;
    inst.meta.insert("n".into(), json!(n));
    inst.meta.insert("coefficient_terms".into(), json!(terms.len()));
    Ok(inst)
}

/// `k(x, y) = 1 + Σ_{i=1}^{ℓ_k} (αⁱ/i!) xⁱ yⁱ` as separable terms.
pub fn series_coefficient(alpha: f64, lk: usize) -> Vec<SeparableTerm> {
    let one: Coef1 = Arc::new(|_| 1.0);
    let mut terms = vec![SeparableTerm { alpha: 1.0, kx: one.clone(), ky: one }];
    let mut fact = 1.0;
    for i in 1..=lk {
        fact *= i as f64;
        let p = i as i32;
        let mono: Coef1 = Arc::new(move |x: f64| x.powi(p));
        terms.push(SeparableTerm { alpha: alpha.powi(p) / fact, kx: mono.clone(), ky: mono });
    }
    terms
}

/// Boundary data `g(x, y) = exp(−α(x + 1)y)`.
pub fn exp_boundary(alpha: f64) -> impl Fn(f64, f64) -> f64 {
    move |x, y| (-alpha * (x + 1.0) * y).exp()
}

/// One factor `1 + (√α z)^{ℓ_k} / √(ℓ_k!)` of the separable approximation `k₀`.
pub fn series_k0_factor(alpha: f64, lk: usize) -> Coef1 {
    let fact: f64 = (1..=lk).map(|i| i as f64).product();
    let c = alpha.sqrt();
    let p = lk as i32;
    Arc::new(move |z: f64| 1.0 + (c * z).powi(p) / fact.sqrt())
}

/// Preconditioners from a separable approximation `k₀ = φ_x(x) φ_y(y)`:
/// `P2 X = A X D + E X B` with `A = A_x`, `E = D_x`, `B = A_y`, `D = D_y`,
/// and `P1 X = A X + X B`.
pub fn fd_diffusion_preconditioners(
    n: usize,
    phi_x: &dyn Fn(f64) -> f64,
    phi_y: &dyn Fn(f64) -> f64,
) -> Result<(PrecondRecipe, PrecondRecipe)> {
    let a = stiffness_1d(n, phi_x)?;
    let e = nodal_1d(n, phi_x)?;
    let b = stiffness_1d(n, phi_y)?;
    let d = nodal_1d(n, phi_y)?;
    Ok((PrecondRecipe::Sylvester { a: a.clone(), b: b.clone() }, PrecondRecipe::GenSylvester { a, b, d, e }))
}

/// Diffusion instance with `k = 1 + Σ (αⁱ/i!) xⁱyⁱ`, `g = exp(−α(x+1)y)` and
/// both preconditioners attached.
pub fn fd_series_instance(n: usize, alpha: f64, lk: usize) -> Result<ProblemInstance> {
    let mut inst = gen_fd_diffusion(n, &series_coefficient(alpha, lk), &exp_boundary(alpha))?;
    let phi = series_k0_factor(alpha, lk);
    let (p1, p2) = fd_diffusion_preconditioners(n, &*phi, &*phi)?;
    inst.p1 = Some(p1);
    inst.p2 = Some(p2);
    inst.meta.insert("alpha".into(), json!(alpha));
    inst.meta.insert("lk".into(), json!(lk));
    Ok(inst)
}
