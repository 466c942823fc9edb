//! Preconditioned conjugate gradient on `Σ Aᵢ X Bᵢᵀ = F` in factored
//! low-rank arithmetic, with recompression of the iterate, the residual and
//! the search direction.

use std::collections::HashMap;
use std::sync::Arc;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FactoredMatrix, Weight};
use crate::numkit::{qr_thin, svd_thin, Mat, SparseMatrix};
use crate::operator::{LowRankRhs, MultitermOperator};
use crate::precond::ShiftSet;
use crate::problems::PrecondRecipe;
use crate::trace::{ResKind, SolveTrace, Status, TraceRow};

/// Truncation tolerances of the iterate, residual and search direction.
///
/// A tolerance of zero disables that part of the criterion. Singular values
/// at roundoff level are always dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub eps_rel_x: f64,
    pub eps_rel_r: f64,
    pub eps_abs_r: f64,
    pub rank_cap: Option<usize>,
}

impl TruncationPolicy {
    /// Default tolerances for a target relative residual `tol`.
    pub fn for_tol(tol: f64) -> Self {
        TruncationPolicy { eps_rel_x: 0.0025 * tol, eps_rel_r: 0.1 * tol, eps_abs_r: 0.001 * tol, rank_cap: None }
    }

    /// Recompression only, no truncation.
    pub fn exact() -> Self {
        TruncationPolicy { eps_rel_x: 0.0, eps_rel_r: 0.0, eps_abs_r: 0.0, rank_cap: None }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.rank_cap = Some(cap);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps_rel_x", self.eps_rel_x), ("eps_rel_r", self.eps_rel_r), ("eps_abs_r", self.eps_abs_r)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and nonnegative")));
            }
        }
        if self.rank_cap == Some(0) {
            return Err(Error::InvalidArgument("rank cap must be positive".into()));
        }
        Ok(())
    }

    pub fn iterate_rule(&self) -> TruncRule {
        TruncRule::Relative(self.eps_rel_x)
    }

    /// Mixed rule; `abs_scale` converts `eps_abs_r` to the units of the
    /// truncated quantity.
    pub fn residual_rule(&self, abs_scale: f64) -> TruncRule {
        TruncRule::Mixed { rel: self.eps_rel_r, abs: self.eps_abs_r * abs_scale }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncRule {
    /// Tail `≤ rel · ‖Z‖_F`.
    Relative(f64),
    /// Tail `≤ max(abs, rel · ‖Z‖_F)`.
    Mixed { rel: f64, abs: f64 },
}

impl TruncRule {
    fn bound(&self, norm: f64) -> f64 {
        match *self {
            TruncRule::Relative(rel) => rel * norm,
            TruncRule::Mixed { rel, abs } => abs.max(rel * norm),
        }
    }
}

/// Outcome of one recompression.
#[derive(Debug, Clone)]
pub struct Truncation {
    pub z: FactoredMatrix,
    /// All singular values of the input, descending.
    pub sigma: Vec<f64>,
    pub kept: usize,
    /// Frobenius norm of the discarded part.
    pub tail: f64,
    /// Tolerance allowed by the rule.
    pub bound: f64,
    /// Whether the rank cap removed values the rule would have kept.
    pub capped: bool,
}

/// Relative level below which singular values count as roundoff.
fn roundoff(m: usize, n: usize) -> f64 {
    m.max(n) as f64 * f64::EPSILON
}

/// Recompresses `z` by QR of both factors and an SVD of the core, then keeps
/// the smallest rank whose tail meets `rule`, at least one if `z ≠ 0`, and
/// at most `cap`.
pub fn truncate_factored(z: &FactoredMatrix, rule: TruncRule, cap: Option<usize>) -> Result<Truncation> {
    let (m, n) = (z.rows(), z.cols());
    if z.width() == 0 {
        return Ok(Truncation { z: z.clone(), sigma: vec![], kept: 0, tail: 0.0, bound: 0.0, capped: false });
    }
    let (ql, rl) = qr_thin(&z.left);
    let (qr, rr) = qr_thin(&z.right);
    let (u, s, v) = svd_thin(&(rl * rr.transpose()))?;
    let sigma: Vec<f64> = s.iter().copied().collect();
    let norm = sigma.iter().map(|x| x * x).sum::<f64>().sqrt();
    let floor = roundoff(m, n) * sigma.first().copied().unwrap_or(0.0);
    let bound = rule.bound(norm);
    // tails[k] = ‖σ_{k+1..}‖.
    let mut tails = vec![0.0f64; sigma.len() + 1];
    for k in (0..sigma.len()).rev() {
        tails[k] = tails[k + 1].hypot(sigma[k]);
    }
    let significant = sigma.iter().take_while(|&&x| x > floor).count();
    let mut kept = (0..=significant).find(|&k| tails[k] <= bound).unwrap_or(significant);
    if norm > 0.0 {
        kept = kept.max(1);
    }
    let mut capped = false;
    if let Some(c) = cap {
        if kept > c {
            kept = c;
            capped = true;
        }
    }
    let left = &ql * u.columns(0, kept) * Mat::from_diagonal(&s.rows(0, kept));
    let right = &qr * v.columns(0, kept);
    Ok(Truncation { z: FactoredMatrix::new(left, right)?, tail: tails[kept], bound, kept, sigma, capped })
}

/// Factored ADI for `A X D + E X B = Z` with truncation after every step.
///
/// Step `j` with shift pair `(p, q)` maps
/// `X ↦ (I + (q − p)(A − qE)⁻¹E) X (I + (q − p)D(B + pD)⁻¹) + (p − q)(A − qE)⁻¹ Z (B + pD)⁻¹`,
/// which has rational error factor `(λ − p)(μ + q)/((λ − q)(μ + p))`.
#[derive(Debug, Clone)]
pub struct Fadi {
    e: SparseMatrix,
    d: SparseMatrix,
    shifts: ShiftSet,
    steps: usize,
    shifted: Vec<(Weight, Weight)>,
}

impl Fadi {
    pub fn new(
        a: &SparseMatrix,
        b: &SparseMatrix,
        e: &SparseMatrix,
        d: &SparseMatrix,
        shifts: ShiftSet,
        steps: usize,
    ) -> Result<Self> {
        if a.nrows() != e.nrows() || b.nrows() != d.nrows() {
            return Err(Error::DimensionMismatch("fADI coefficients".into()));
        }
        if shifts.is_empty() || steps == 0 {
            return Err(Error::InvalidArgument("fADI needs shifts and at least one step".into()));
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
        Ok(Fadi { e: e.clone(), d: d.clone(), shifts, steps, shifted })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn shifts(&self) -> &ShiftSet {
        &self.shifts
    }

    /// Runs the iteration from `X = 0`. `rule` maps the norm ratio
    /// `‖X_j‖/‖Z‖` to the truncation rule applied after step `j`.
    pub fn apply(
        &self,
        z: &FactoredMatrix,
        rule: &dyn Fn(f64) -> TruncRule,
        cap: Option<usize>,
        log: &mut Vec<Truncation>,
    ) -> Result<FactoredMatrix> {
        let (m, n) = (z.rows(), z.cols());
        if m != self.e.nrows() || n != self.d.nrows() {
            return Err(Error::DimensionMismatch("fADI right-hand side".into()));
        }
        let z_norm = z.frob_norm();
        let mut x = FactoredMatrix::zeros(m, n);
        if z_norm == 0.0 {
            return Ok(x);
        }
        for j in 0..self.steps {
            let idx = j % self.shifted.len();
            let (p, q) = self.shifts.pairs[idx];
            let (wl, wr) = &self.shifted[idx];
            let hom_l = &x.left + wl.solve(&self.e.mul_dense(&x.left)) * (q - p);
            let hom_r = &x.right + wr.solve(&self.d.mul_dense(&x.right)) * (q - p);
            let src = FactoredMatrix::new(wl.solve(&z.left) * (p - q), wr.solve(&z.right))?;
            let next = FactoredMatrix::concat(&[&FactoredMatrix::new(hom_l, hom_r)?, &src])?;
            let t = truncate_factored(&next, rule(next.frob_norm() / z_norm), cap)?;
            x = t.z.clone();
            log.push(t);
        }
        Ok(x)
    }
}

/// Preconditioner applied to factored matrices in the ambient space.
#[derive(Debug, Clone)]
pub enum AmbientPrecond {
    Identity,
    /// `P X = E X D`, inverted exactly with rank preserved.
    Kron { e: Weight, d: Weight },
    /// `P X = A X D + E X B`, approximated by truncated fADI.
    Fadi(Arc<Fadi>),
}

impl AmbientPrecond {
    pub fn kron(e: &SparseMatrix, d: &SparseMatrix) -> Result<Self> {
        Ok(AmbientPrecond::Kron { e: Weight::new(e)?, d: Weight::new(d)? })
    }

    /// Exact inverse for Kronecker recipes; fADI with `shifts` Wachspress
    /// shifts cycled over `steps` steps for Sylvester-type recipes.
    pub fn from_recipe(recipe: &PrecondRecipe, m: usize, n: usize, shifts: usize, steps: usize) -> Result<Self> {
        match recipe {
            PrecondRecipe::Kron { e, d } => Self::kron(e, d),
            _ => {
                let (a, b, e, d, set) = recipe.adi_data(m, n, shifts)?;
                Ok(AmbientPrecond::Fadi(Arc::new(Fadi::new(&a, &b, &e, &d, set, steps)?)))
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AmbientPrecond::Identity => "identity",
            AmbientPrecond::Kron { .. } => "kron",
            AmbientPrecond::Fadi(_) => "fadi",
        }
    }

    /// `P⁻¹ R`. fADI truncates with the residual mixed rule, its absolute
    /// part scaled by the running gain `‖X_j‖/‖R‖`.
    pub fn apply(
        &self,
        r: &FactoredMatrix,
        policy: &TruncationPolicy,
        abs_ref: f64,
        log: &mut Vec<Truncation>,
    ) -> Result<FactoredMatrix> {
        match self {
            AmbientPrecond::Identity => Ok(r.clone()),
            AmbientPrecond::Kron { e, d } => {
                if e.dim() != r.rows() || d.dim() != r.cols() {
                    return Err(Error::DimensionMismatch("Kronecker preconditioner".into()));
                }
                FactoredMatrix::new(e.solve(&r.left), d.solve(&r.right))
            }
            AmbientPrecond::Fadi(f) => {
                let r_norm = r.frob_norm();
                let scale = if r_norm > 0.0 { abs_ref / r_norm } else { 0.0 };
                f.apply(r, &|gain| policy.residual_rule(scale * gain), policy.rank_cap, log)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncCgOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub policy: TruncationPolicy,
    /// Stagnation is reported when the best residual of the last
    /// `stagnation_window` iterations is not below `stagnation_factor`
    /// times the best residual before them.
    pub stagnation_window: usize,
    pub stagnation_factor: f64,
}

impl TruncCgOptions {
    pub fn new(tol: f64) -> Self {
        TruncCgOptions {
            tol,
            max_iter: 500,
            policy: TruncationPolicy::for_tol(tol),
            stagnation_window: 20,
            stagnation_factor: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        if self.stagnation_window == 0 || !(self.stagnation_factor > 0.0 && self.stagnation_factor <= 1.0) {
            return Err(Error::InvalidArgument("stagnation window and factor".into()));
        }
        self.policy.validate()
    }
}

/// One entry of the truncation certificate log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationRecord {
    pub iter: usize,
    /// `x`, `r`, `p` or `z` (inside the preconditioner).
    pub target: String,
    pub width: usize,
    pub kept: usize,
    pub tail: f64,
    pub bound: f64,
    pub capped: bool,
}

impl TruncationRecord {
    fn new(iter: usize, target: &str, t: &Truncation) -> Self {
        TruncationRecord {
            iter,
            target: target.into(),
            width: t.sigma.len(),
            kept: t.kept,
            tail: t.tail,
            bound: t.bound,
            capped: t.capped,
        }
    }

    /// The discarded tail is within the tolerance unless the cap acted.
    pub fn within_policy(&self) -> bool {
        self.capped || self.tail <= self.bound
    }
}

#[derive(Debug, Clone)]
pub struct TruncCgOutcome {
    pub x: FactoredMatrix,
    pub trace: SolveTrace,
    pub status: Status,
    pub truncations: Vec<TruncationRecord>,
}

impl TruncCgOutcome {
    pub fn rank(&self) -> usize {
        self.x.width()
    }
}

struct Run<'a> {
    policy: &'a TruncationPolicy,
    iter: usize,
    log: Vec<TruncationRecord>,
}

impl Run<'_> {
    fn cut(&mut self, z: &FactoredMatrix, target: &str, rule: TruncRule) -> Result<FactoredMatrix> {
        let t = truncate_factored(z, rule, self.policy.rank_cap)?;
        self.log.push(TruncationRecord::new(self.iter, target, &t));
        Ok(t.z)
    }

    fn precondition(&mut self, pre: &AmbientPrecond, r: &FactoredMatrix, abs_ref: f64) -> Result<FactoredMatrix> {
        let mut inner = Vec::new();
        let z = pre.apply(r, self.policy, abs_ref, &mut inner)?;
        self.log.extend(inner.iter().map(|t| TruncationRecord::new(self.iter, "z", t)));
        Ok(z)
    }
}

/// Truncated preconditioned CG from `X₀ = 0`.
///
/// `X` is truncated with the relative iterate tolerance, the explicitly
/// recomputed residual and the search direction with the mixed rule, and
/// `Q = A P` is kept untruncated. Convergence is tested on the exact
/// Frobenius norm of `F − A X` before residual truncation.
pub fn truncated_cg_solve(
    op: &MultitermOperator,
    rhs: &LowRankRhs,
    pre: &AmbientPrecond,
    opts: &TruncCgOptions,
) -> Result<TruncCgOutcome> {
    opts.validate()?;
    let (m, n) = (op.rows(), op.cols());
    if rhs.rows() != m || rhs.cols() != n {
        return Err(Error::DimensionMismatch("right-hand side and operator".into()));
    }
    let policy = &opts.policy;
    let f_norm = rhs.frob_norm();
    let mut trace = SolveTrace::new();
    let mut x = FactoredMatrix::zeros(m, n);
    let mut row = TraceRow::new(0, 0.0, 0);
    row.res_kind = ResKind::Exact;
    if f_norm == 0.0 {
        row.res_rel = Some(0.0);
        row.event = "converged".into();
        trace.push(row)?;
        return Ok(TruncCgOutcome { x, trace, status: Status::Converged, truncations: vec![] });
    }
    row.res_rel = Some(1.0);
    if 1.0 <= opts.tol {
        row.event = "converged".into();
        trace.push(row)?;
        return Ok(TruncCgOutcome { x, trace, status: Status::Converged, truncations: vec![] });
    }

    let mut run = Run { policy, iter: 0, log: Vec::new() };
    let mut r = run.cut(rhs, "r", policy.residual_rule(f_norm))?;
    let z = run.precondition(pre, &r, f_norm)?;
    let gain = z.frob_norm() / r.frob_norm();
    let mut p = run.cut(&z, "p", policy.residual_rule(f_norm * gain))?;
    let mut q = op.apply(&p)?;
    let mut xi = p.inner(&q);
    row.rank_r = Some(r.width());
    row.rank_p = Some(p.width());
    row.event = "init".into();
    trace.push(row)?;

    let mut best_before = f64::INFINITY;
    let mut window: Vec<f64> = Vec::new();
    let mut status = Status::MaxIter;
    for k in 1..=opts.max_iter {
        run.iter = k;
        if !(xi > 0.0) {
            debug!("truncated CG breakdown at iteration {k}: <P, AP> = {xi:e}");
            if let Some(last) = trace.last_mut() {
                last.event = "cg_breakdown".into();
            }
            status = Status::CgBreakdown;
            break;
        }
        let omega = r.inner(&p) / xi;
        x = run.cut(&x.add(&p.scaled(omega))?, "x", policy.iterate_rule())?;
        let r_full = rhs.add(&op.apply(&x)?.scaled(-1.0))?;
        let res = r_full.frob_norm() / f_norm;
        let f = -0.5 * (x.inner(&r_full) + x.inner(rhs));
        let mut row = TraceRow::new(k, f, x.width());
        row.res_rel = Some(res);
        row.res_kind = ResKind::Exact;
        row.alpha = omega;
        if res <= opts.tol {
            row.rank_r = Some(r.width());
            row.rank_p = Some(p.width());
            row.event = "converged".into();
            trace.push(row)?;
            status = Status::Converged;
            break;
        }
        r = run.cut(&r_full, "r", policy.residual_rule(f_norm))?;
        let z = run.precondition(pre, &r, f_norm)?;
        let beta = -z.inner(&q) / xi;
        let gain = z.frob_norm() / r.frob_norm();
        p = run.cut(&z.add(&p.scaled(beta))?, "p", policy.residual_rule(f_norm * gain))?;
        q = op.apply(&p)?;
        xi = p.inner(&q);
        row.beta = beta;
        row.rank_r = Some(r.width());
        row.rank_p = Some(p.width());

        window.push(res);
        if window.len() > opts.stagnation_window {
            best_before = best_before.min(window.remove(0));
        }
        let best_recent = window.iter().copied().fold(f64::INFINITY, f64::min);
        if window.len() == opts.stagnation_window && best_recent > opts.stagnation_factor * best_before {
            row.event = "stagnation".into();
            trace.push(row)?;
            status = Status::Stagnation;
            break;
        }
        trace.push(row)?;
    }
    Ok(TruncCgOutcome { x, trace, status, truncations: run.log })
}
