//! Preconditioned Riemannian nonlinear CG on the fixed-rank manifold.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{
    riemannian_gradient, transport, FactoredMatrix, FixedRankPoint, KroneckerMetric, RetractionPlan, TangentVector,
};
use crate::operator::{LowRankRhs, MultitermOperator};
use crate::precond::PrecondSpec;
use crate::trace::{ResKind, SolveTrace, Status, TraceRow};

/// Relative size of a β denominator below which β is set to zero.
const BETA_GUARD: f64 = 1e-14;

#[derive(Debug, Clone)]
pub enum InitialGuess {
    /// Gaussian rank-`r` point with unit Frobenius norm.
    Random { seed: u64 },
    Given(FixedRankPoint),
}

#[derive(Debug, Clone)]
pub struct RnlcgOptions {
    pub rank: usize,
    pub max_iter: usize,
    /// Target relative residual `‖A X − F‖_F / ‖F‖_F`.
    pub tol: f64,
    /// Armijo sufficient-decrease parameter.
    pub slope: f64,
    /// Backtracking shrink factor.
    pub tau: f64,
    pub max_backtracks: usize,
    /// Exact residual is computed every `check_every` iterations.
    pub check_every: usize,
    /// Consecutive iterations with negligible objective decrease that end the
    /// solve with status `stagnation`. Zero disables the test.
    pub stagnation_window: usize,
    /// Metric `B X = E X D`; `None` is the standard inner product.
    pub metric: Option<Arc<KroneckerMetric>>,
    pub precond: PrecondSpec,
    pub init: InitialGuess,
}

impl RnlcgOptions {
    pub fn new(rank: usize) -> Self {
        RnlcgOptions {
            rank,
            max_iter: 1000,
            tol: 1e-6,
            slope: 1e-4,
            tau: 0.5,
            max_backtracks: 25,
            check_every: 1,
            stagnation_window: 5,
            metric: None,
            precond: PrecondSpec::Identity,
            init: InitialGuess::Random { seed: 0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slope > 0.0 && self.slope < 1.0) {
            return Err(Error::InvalidArgument(format!("Armijo slope {} not in (0, 1)", self.slope)));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidArgument(format!("shrink factor {} not in (0, 1)", self.tau)));
        }
        if self.check_every == 0 {
            return Err(Error::InvalidArgument("check_every must be positive".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidArgument("tolerance must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn metric_for(&self, m: usize, n: usize) -> Result<Arc<KroneckerMetric>> {
        match &self.metric {
            Some(mt) if mt.rows() != m || mt.cols() != n => {
                Err(Error::DimensionMismatch("metric and problem size".into()))
            }
            Some(mt) => Ok(mt.clone()),
            None => Ok(KroneckerMetric::identity(m, n)),
        }
    }

    /// The starting point on the rank-`r` manifold.
    pub fn initial_point(&self, m: usize, n: usize) -> Result<FixedRankPoint> {
        let metric = self.metric_for(m, n)?;
        match &self.init {
            InitialGuess::Random { seed } => {
                FixedRankPoint::random(m, n, self.rank, metric, &mut ChaCha8Rng::seed_from_u64(*seed))
            }
            InitialGuess::Given(x) => {
                if x.rows() != m || x.cols() != n {
                    return Err(Error::DimensionMismatch("initial guess".into()));
                }
                if !x.metric().same_as(&metric) {
                    return Err(Error::MetricMismatch);
                }
                Ok(x.clone())
            }
        }
    }
}

/// Quantities carried from the previous iterate.
#[derive(Debug, Clone)]
pub struct History {
    pub x: FixedRankPoint,
    pub xi: TangentVector,
    pub g: TangentVector,
    /// `P̃⁻¹ g` at the previous iterate.
    pub pg: TangentVector,
    /// `⟨g, ξ⟩_B` at the previous iterate.
    pub g_xi: f64,
}

#[derive(Debug, Clone)]
pub struct Direction {
    pub xi: TangentVector,
    pub beta: f64,
    /// Set when the conjugate direction was replaced by `−P̃⁻¹g`.
    pub reset: bool,
}

/// `β = max(0, min(β_HS, β_DY))` for the preconditioned rules, with previous
/// quantities already transported to the current point.
pub fn beta_rule(g: &TangentVector, pg: &TangentVector, t_xi: &TangentVector, t_pg: &TangentVector, g_xi_prev: f64) -> Result<f64> {
    let gpg = g.inner(pg)?;
    let den = g.inner(t_xi)? - g_xi_prev;
    let hs_num = gpg - g.inner(t_pg)?;
    let num = hs_num.abs().max(gpg.abs());
    if !(den.abs() >= BETA_GUARD * num) || den == 0.0 || !den.is_finite() {
        return Ok(0.0);
    }
    let beta = (hs_num / den).min(gpg / den).max(0.0);
    Ok(if beta.is_finite() { beta } else { 0.0 })
}

/// `ξ = −P̃⁻¹g + β T(ξ_prev)`, reset to `−P̃⁻¹g` unless both
/// `⟨P̃⁻¹g, ξ⟩_B < 0` and `⟨g, ξ⟩_B < 0`.
pub fn search_direction(
    x: &FixedRankPoint,
    g: &TangentVector,
    pg: &TangentVector,
    prev: Option<&History>,
) -> Result<Direction> {
    g.check_base(x)?;
    pg.check_base(x)?;
    let steepest = pg.scaled(-1.0);
    let Some(h) = prev else {
        return Ok(Direction { xi: steepest, beta: 0.0, reset: false });
    };
    let t_xi = transport(x, &h.x, &h.xi)?;
    let t_pg = transport(x, &h.x, &h.pg)?;
    let beta = beta_rule(g, pg, &t_xi, &t_pg, h.g_xi)?;
    if beta == 0.0 {
        return Ok(Direction { xi: steepest, beta, reset: false });
    }
    let xi = steepest.lincomb(1.0, &t_xi, beta)?;
    if pg.inner(&xi)? >= 0.0 || g.inner(&xi)? >= 0.0 {
        return Ok(Direction { xi: steepest, beta: 0.0, reset: true });
    }
    Ok(Direction { xi, beta, reset: false })
}

/// Exact minimizer of `t ↦ f(X + tξ)` on the tangent line:
/// `−⟨g, ξ⟩_B / ⟨A ξ, ξ⟩`.
pub fn initial_step(op: &MultitermOperator, x: &FixedRankPoint, xi: &TangentVector, g: &TangentVector) -> Result<f64> {
    let num = -g.inner(xi)?;
    if !(num > 0.0) {
        return Err(Error::InvalidArgument(format!("not a descent direction: ⟨g, ξ⟩ = {}", -num)));
    }
    let den = op.energy(&xi.embed(x)?)?;
    if !(den > 0.0) {
        return Err(Error::Indefinite(format!("curvature ⟨Aξ, ξ⟩ = {den:e} along the search direction")));
    }
    Ok(num / den)
}

#[derive(Debug, Clone)]
pub struct LineSearch {
    pub accepted: bool,
    pub alpha: f64,
    pub backtracks: usize,
    /// Accepted point, or `X` on failure.
    pub point: FixedRankPoint,
    /// `f(point) − f(X)`.
    pub df: f64,
}

/// `f(Y) − f(X) = ⟨A X − F, Δ⟩ + ½⟨A Δ, Δ⟩` with `Δ = Y − X`.
pub fn objective_change(op: &MultitermOperator, residual: &FactoredMatrix, delta: &FactoredMatrix) -> Result<f64> {
    Ok(residual.inner(delta) + 0.5 * op.energy(delta)?)
}

/// Armijo backtracking from `alpha0` along the retraction curve. The
/// objective change is evaluated from the step itself, so the test is
/// insensitive to the size of `f`.
pub fn armijo_backtrack(
    op: &MultitermOperator,
    x: &FixedRankPoint,
    residual: &FactoredMatrix,
    xi: &TangentVector,
    alpha0: f64,
    opts: &RnlcgOptions,
) -> Result<LineSearch> {
    let slope = xi.inner(&riemannian_gradient(x, residual)?)?;
    armijo_with_slope(op, x, residual, xi, slope, alpha0, opts)
}

pub(crate) fn armijo_with_slope(
    op: &MultitermOperator,
    x: &FixedRankPoint,
    residual: &FactoredMatrix,
    xi: &TangentVector,
    g_xi: f64,
    alpha0: f64,
    opts: &RnlcgOptions,
) -> Result<LineSearch> {
    if !(g_xi < 0.0) {
        return Err(Error::InvalidArgument(format!("not a descent direction: ⟨g, ξ⟩ = {g_xi}")));
    }
    let plan = RetractionPlan::new(x, xi)?;
    let mut alpha = alpha0;
    for j in 0..=opts.max_backtracks {
        let (y, delta) = plan.step(alpha)?;
        let df = objective_change(op, residual, &delta)?;
        if df <= opts.slope * alpha * g_xi {
            return Ok(LineSearch { accepted: true, alpha, backtracks: j, point: y, df });
        }
        if j < opts.max_backtracks {
            alpha *= opts.tau;
        }
    }
    Ok(LineSearch { accepted: false, alpha, backtracks: opts.max_backtracks, point: x.clone(), df: 0.0 })
}

/// Outcome of one iteration of [`Rnlcg`].
#[derive(Debug, Clone)]
pub struct StepReport {
    pub beta: f64,
    pub alpha: f64,
    pub backtracks: usize,
    pub reset: bool,
    pub df: f64,
    /// `⟨g, P̃⁻¹g⟩_B` at the point the step started from.
    pub gpg: f64,
    pub accepted: bool,
}

/// Iteration state of R-NLCG at a fixed rank. Each call to [`Rnlcg::step`]
/// performs one outer iteration.
pub struct Rnlcg<'a> {
    op: &'a MultitermOperator,
    rhs: &'a LowRankRhs,
    opts: &'a RnlcgOptions,
    x: FixedRankPoint,
    residual: FactoredMatrix,
    f: f64,
    rhs_norm: f64,
    prev: Option<History>,
}

impl<'a> Rnlcg<'a> {
    pub fn new(op: &'a MultitermOperator, rhs: &'a LowRankRhs, x: FixedRankPoint, opts: &'a RnlcgOptions) -> Result<Self> {
        opts.validate()?;
        if !opts.precond.compatible_with(x.metric()) {
            return Err(Error::MetricMismatch);
        }
        let rhs_norm = rhs.frob_norm();
        if !(rhs_norm > 0.0) {
            return Err(Error::Degenerate("right-hand side is zero".into()));
        }
        let ev = op.evaluate(&x, rhs)?;
        Ok(Rnlcg { op, rhs, opts, x, residual: ev.residual, f: ev.f, rhs_norm, prev: None })
    }

    pub fn point(&self) -> &FixedRankPoint {
        &self.x
    }

    pub fn into_point(self) -> FixedRankPoint {
        self.x
    }

    pub fn residual(&self) -> &FactoredMatrix {
        &self.residual
    }

    /// Objective value, accumulated from exact per-step changes after the
    /// first evaluation.
    pub fn objective(&self) -> f64 {
        self.f
    }

    /// Quantities of the last accepted step, at the point it started from.
    pub fn history(&self) -> Option<&History> {
        self.prev.as_ref()
    }

    pub fn rhs_norm(&self) -> f64 {
        self.rhs_norm
    }

    /// `‖A X − F‖_F / ‖F‖_F` by QR of the residual factors.
    pub fn residual_rel(&self) -> f64 {
        self.residual.frob_norm() / self.rhs_norm
    }

    /// Replaces the iterate and drops the conjugate-direction memory.
    pub fn restart(&mut self, x: FixedRankPoint) -> Result<()> {
        let ev = self.op.evaluate(&x, self.rhs)?;
        self.x = x;
        self.residual = ev.residual;
        self.f = ev.f;
        self.prev = None;
        Ok(())
    }

    /// Moves to `x = X + Δ` (possibly of another rank), updating the objective
    /// by the exact change along `Δ`, and drops the conjugate-direction memory.
    /// Returns the objective change.
    pub fn jump(&mut self, x: FixedRankPoint, delta: &FactoredMatrix) -> Result<f64> {
        let df = objective_change(self.op, &self.residual, delta)?;
        let ev = self.op.evaluate(&x, self.rhs)?;
        self.x = x;
        self.residual = ev.residual;
        self.f += df;
        self.prev = None;
        Ok(df)
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let x = &self.x;
        let g = riemannian_gradient(x, &self.residual)?;
        let pg = self.opts.precond.apply(x, &g)?;
        let gpg = g.inner(&pg)?;
        if gpg < 0.0 {
            return Err(Error::Indefinite(format!("⟨g, P̃⁻¹g⟩ = {gpg:e} is negative")));
        }
        if gpg == 0.0 {
            return Ok(StepReport { beta: 0.0, alpha: 0.0, backtracks: 0, reset: false, df: 0.0, gpg, accepted: false });
        }
        let dir = search_direction(x, &g, &pg, self.prev.as_ref())?;
        let g_xi = g.inner(&dir.xi)?;
        let alpha0 = initial_step(self.op, x, &dir.xi, &g)?;
        let ls = armijo_with_slope(self.op, x, &self.residual, &dir.xi, g_xi, alpha0, self.opts)?;
        let report = StepReport {
            beta: dir.beta,
            alpha: ls.alpha,
            backtracks: ls.backtracks,
            reset: dir.reset,
            df: ls.df,
            gpg,
            accepted: ls.accepted,
        };
        if ls.accepted {
            let ev = self.op.evaluate(&ls.point, self.rhs)?;
            let old = std::mem::replace(&mut self.x, ls.point);
            self.prev = Some(History { x: old, xi: dir.xi, g, pg, g_xi });
            self.residual = ev.residual;
            self.f += ls.df;
        }
        Ok(report)
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub x: FixedRankPoint,
    pub trace: SolveTrace,
    pub status: Status,
}

impl SolveOutcome {
    pub fn final_residual(&self) -> Option<f64> {
        self.trace.last_exact_residual()
    }
}

/// Fixed-rank preconditioned R-NLCG.
pub fn rnlcg_solve(op: &MultitermOperator, rhs: &LowRankRhs, opts: &RnlcgOptions) -> Result<SolveOutcome> {
    let x0 = opts.initial_point(op.rows(), op.cols())?;
    let mut state = Rnlcg::new(op, rhs, x0, opts)?;
    let mut trace = SolveTrace::new();
    let mut row = TraceRow::new(0, state.objective(), state.point().rank());
    let mut res = state.residual_rel();
    row.res_rel = Some(res);
    row.event = "init".into();
    trace.push(row)?;
    let mut quiet = 0usize;
    let mut k = 0usize;
    let status = loop {
        if res <= opts.tol {
            trace.last_mut().expect("trace has a row").event = "converged".into();
            break Status::Converged;
        }
        if k >= opts.max_iter {
            break Status::MaxIter;
        }
        let f_before = state.objective();
        let rep = state.step()?;
        k += 1;
        let mut row = TraceRow::new(k, state.objective(), state.point().rank());
        row.beta = rep.beta;
        row.alpha = rep.alpha;
        row.backtracks = rep.backtracks;
        if rep.reset {
            row.event = "reset".into();
        }
        let checked = k % opts.check_every == 0;
        if checked {
            res = state.residual_rel();
            row.res_rel = Some(res);
            row.res_kind = ResKind::Exact;
        }
        if rep.gpg == 0.0 {
            row.event = "stationary".into();
            trace.push(row)?;
            break Status::Stagnation;
        }
        if !rep.accepted {
            row.event = "line_search_failure".into();
            trace.push(row)?;
            break Status::LineSearchFailure;
        }
        trace.push(row)?;
        if -rep.df <= 4.0 * f64::EPSILON * f_before.abs() {
            quiet += 1;
        } else {
            quiet = 0;
        }
        if opts.stagnation_window > 0 && quiet >= opts.stagnation_window && res > opts.tol {
            if !checked {
                res = state.residual_rel();
                let last = trace.last_mut().expect("trace has a row");
                last.res_rel = Some(res);
                if res <= opts.tol {
                    continue;
                }
            }
            trace.last_mut().expect("trace has a row").event = "stagnation".into();
            break Status::Stagnation;
        }
    };
    if trace.last_exact_residual().is_none() || trace.last().and_then(|r| r.res_rel).is_none() {
        res = state.residual_rel();
        trace.last_mut().expect("trace has a row").res_rel = Some(res);
    }
    Ok(SolveOutcome { x: state.into_point(), trace, status })
}
