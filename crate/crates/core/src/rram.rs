//! Rank-adaptive outer loop around fixed-rank R-NLCG.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{weighted_svd, FactoredMatrix, FixedRankPoint, WeightedSvd, RANK_FLOOR};
use crate::numkit::{hcat, qr_thin, Mat, Vector};
use crate::operator::{LowRankRhs, MultitermOperator};
use crate::rnlcg::{Rnlcg, RnlcgOptions, SolveOutcome};
use crate::trace::{ResKind, SolveTrace, Status, TraceRow};

/// Hutch++ estimator of `‖R‖_F² = tr(RᵀR)` with fixed test vectors, so that
/// successive estimates share their randomness.
#[derive(Debug, Clone)]
pub struct HutchPlusPlus {
    sketch: Mat,
    probes: Mat,
}

impl HutchPlusPlus {
    /// `⌈budget/3⌉` sketch vectors (two products each) and the remaining
    /// products as Hutchinson probes, all Rademacher.
    pub fn new<R: Rng>(n: usize, budget: usize, rng: &mut R) -> Result<Self> {
        if budget < 3 {
            return Err(Error::InvalidArgument(format!("Hutch++ budget {budget} < 3")));
        }
        let s = budget.div_ceil(3);
        let h = budget - 2 * s;
        let mut sign = || if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let sketch = Mat::from_fn(n, s, |_, _| sign());
        let probes = Mat::from_fn(n, h, |_, _| sign());
        Ok(HutchPlusPlus { sketch, probes })
    }

    /// Estimate of `tr(RᵀR)`.
    pub fn trace(&self, r: &FactoredMatrix) -> f64 {
        if r.width() == 0 {
            return 0.0;
        }
        let apply = |v: &Mat| &r.right * (r.left.transpose() * (&r.left * (r.right.transpose() * v)));
        let (q, _) = qr_thin(&apply(&self.sketch));
        let t1 = crate::numkit::inner(&q, &apply(&q));
        if self.probes.ncols() == 0 {
            return t1;
        }
        let g = &self.probes - &q * (q.transpose() * &self.probes);
        let t2 = crate::numkit::inner(&g, &apply(&g)) / self.probes.ncols() as f64;
        t1 + t2
    }

    /// Estimate of `‖R‖_F`.
    pub fn norm(&self, r: &FactoredMatrix) -> f64 {
        self.trace(r).max(0.0).sqrt()
    }
}

/// One-shot Hutch++ estimate of `‖R‖_F` with `budget` products by `RᵀR`.
pub fn hutchpp_residual_norm<R: Rng>(r: &FactoredMatrix, budget: usize, rng: &mut R) -> Result<f64> {
    Ok(HutchPlusPlus::new(r.cols(), budget, rng)?.norm(r))
}

/// Least-squares slope of `y` against its index.
pub fn ls_slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    if y.len() < 2 {
        return 0.0;
    }
    let xm = (n - 1.0) / 2.0;
    let ym = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (v - ym);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Plateau test on the `log₁₀` residual history at the current rank: halt when
/// the slope over the last `w_len` iterations is at least `fact` times the
/// mean slope of the whole history.
pub fn plateau_detect(history: &[f64], w_len: usize, fact: f64) -> bool {
    let n = history.len();
    if w_len < 1 || n < w_len + 1 {
        return false;
    }
    let window = ls_slope(&history[n - w_len - 1..]);
    let mean = (history[n - 1] - history[0]) / (n - 1) as f64;
    window >= fact * mean
}

/// Target rank after a decrease, or `None` when `σ_r² / Σσᵢ² ≥ ε²`.
/// The target is the smallest `k` whose discarded tail is below `ε²` of the total.
pub fn rank_decrease_target(s: &[f64], eps: f64) -> Option<usize> {
    let r = s.len();
    let total: f64 = s.iter().map(|v| v * v).sum();
    if r == 0 || !(total > 0.0) {
        return None;
    }
    let eps2 = eps * eps;
    if !(s[r - 1] * s[r - 1] / total < eps2) {
        return None;
    }
    let mut tail = total;
    for (k, v) in s.iter().enumerate() {
        tail -= v * v;
        if tail.max(0.0) / total < eps2 {
            return Some(k + 1);
        }
    }
    warn!("rank decrease found no significant component; keeping rank 1");
    Some(1)
}

/// Truncation to the decreased rank, with the removed part `Δ = X′ − X`.
pub fn rank_decrease(x: &FixedRankPoint, eps: f64) -> Option<(FixedRankPoint, FactoredMatrix)> {
    let s: Vec<f64> = x.s().iter().copied().collect();
    let k = rank_decrease_target(&s, eps)?;
    if k >= x.rank() {
        return None;
    }
    let r = x.rank();
    let tail = FactoredMatrix {
        left: -(x.u().columns(k, r - k) * Mat::from_diagonal(&x.s().rows(k, r - k))),
        right: x.v().columns(k, r - k).into_owned(),
    };
    Some((x.leading(k), tail))
}

/// Relative level, against `‖B⁻¹F‖_B`, below which the normal component of the
/// gradient is treated as zero.
pub const NORMAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct RankIncrease {
    /// `X + α★ Y★` of rank `r + r_up`.
    pub x: FixedRankPoint,
    /// The normal direction `Y★`.
    pub y: FactoredMatrix,
    pub alpha: f64,
    /// `X′ − X`.
    pub delta: FactoredMatrix,
    /// Number of random components added because the normal part had
    /// numerical rank below `r_up`.
    pub padded: usize,
}

/// Random `m × p` block, `W`-orthogonal to the columns of `basis` and
/// `W`-orthonormal, returned with `W` times itself.
fn random_complement<R: Rng>(
    w: &crate::geometry::Weight,
    basis: &Mat,
    wbasis: &Mat,
    p: usize,
    rng: &mut R,
) -> (Mat, Mat) {
    let mut g = Mat::from_fn(w.dim(), p, |_, _| rng.sample(StandardNormal));
    for _ in 0..2 {
        g -= basis * (wbasis.transpose() * &g);
    }
    let (q, _) = qr_thin(&w.c_mul(&g));
    (w.c_inv(&q), w.ct_mul(&q))
}

/// Rank increase along the rank-`r_up` `B`-truncation `Y★` of the normal
/// component `((E⁻¹ − ŨŨᵀ)(−R_L)) ((D⁻¹ − ṼṼᵀ)R_R)ᵀ` of the negative
/// gradient, with the exact step `α★ = −⟨A X − F, Y★⟩ / ⟨A Y★, Y★⟩`.
pub fn rank_increase<R: Rng>(
    x: &FixedRankPoint,
    op: &MultitermOperator,
    rhs: &LowRankRhs,
    r_up: usize,
    rng: &mut R,
) -> Result<RankIncrease> {
    let (m, n, r) = (x.rows(), x.cols(), x.rank());
    if r_up == 0 || r + r_up > m.min(n) {
        return Err(Error::InvalidArgument(format!("cannot raise rank {r} by {r_up} for a {m}x{n} matrix")));
    }
    let metric = x.metric().clone();
    let res = op.residual(x, rhs)?;
    let neg_l = -&res.left;
    let left = metric.e.solve(&neg_l) - x.u() * (x.u().transpose() * &neg_l);
    let right = metric.d.solve(&res.right) - x.v() * (x.v().transpose() * &res.right);
    let w = weighted_svd(&FactoredMatrix::new(left, right)?, &metric)?;
    let s1 = w.s.iter().copied().fold(0.0, f64::max);
    // Components at roundoff level of ‖B⁻¹F‖_B count as zero.
    let fscale = FactoredMatrix::new(metric.e.solve(&rhs.left), metric.d.solve(&rhs.right))?.b_norm(&metric);
    let floor = (RANK_FLOOR * s1).max(NORMAL_FLOOR * fscale);
    let k = w.s.iter().filter(|&&v| v > floor).count().min(r_up);
    let p = r_up - k;

    let mut uy = w.u.columns(0, k).into_owned();
    let mut euy = w.eu.columns(0, k).into_owned();
    let mut vy = w.v.columns(0, k).into_owned();
    let mut dvy = w.dv.columns(0, k).into_owned();
    let mut sy: Vec<f64> = w.s.iter().take(k).copied().collect();
    if p > 0 {
        let bu = hcat(&[x.u(), &uy]);
        let ebu = hcat(&[x.eu(), &euy]);
        let (pu, epu) = random_complement(&metric.e, &bu, &ebu, p, rng);
        let bv = hcat(&[x.v(), &vy]);
        let dbv = hcat(&[x.dv(), &dvy]);
        let (pv, dpv) = random_complement(&metric.d, &bv, &dbv, p, rng);
        uy = hcat(&[&uy, &pu]);
        euy = hcat(&[&euy, &epu]);
        vy = hcat(&[&vy, &pv]);
        dvy = hcat(&[&dvy, &dpv]);
        let scale = if k > 0 { sy[k - 1] } else { 1.0 };
        sy.extend(std::iter::repeat(scale).take(p));
    }
    let sy = Vector::from_vec(sy);
    let y = FactoredMatrix { left: &uy * Mat::from_diagonal(&sy), right: vy.clone() };
    let num = -res.inner(&y);
    let den = op.energy(&y)?;
    if !(den > 0.0) {
        return Err(Error::Indefinite(format!("curvature ⟨A Y, Y⟩ = {den:e} along the rank update")));
    }
    let alpha = if num > 0.0 { num / den } else { 0.0 };
    // New singular values are kept above the numerical-rank floor so that the
    // point has rank exactly r + r_up; the floor changes f only at roundoff level.
    let floor = f64::EPSILON.sqrt() * x.s()[0];
    let c = Vector::from_fn(r_up, |i, _| (alpha * sy[i]).max(floor));
    let delta = FactoredMatrix { left: &uy * Mat::from_diagonal(&c), right: vy.clone() };
    let mut s = x.s().as_slice().to_vec();
    s.extend(c.iter());
    let ws = WeightedSvd {
        u: hcat(&[x.u(), &uy]),
        s: Vector::from_vec(s),
        v: hcat(&[x.v(), &vy]),
        eu: hcat(&[x.eu(), &euy]),
        dv: hcat(&[x.dv(), &dvy]),
    };
    let xn = FixedRankPoint::assemble(ws, metric, false);
    Ok(RankIncrease { x: xn, y, alpha, delta, padded: p })
}

#[derive(Debug, Clone)]
pub struct RramOptions {
    pub r0: usize,
    pub r_up: usize,
    /// Relative singular-value tolerance for rank decrease.
    pub eps_sigma: f64,
    /// Target relative residual `‖A X − F‖_F / ‖F‖_F`.
    pub tol: f64,
    pub w_len: usize,
    pub fact: f64,
    /// Products by `RᵀR` per Hutch++ estimate.
    pub hutch_budget: usize,
    /// Total number of R-NLCG iterations.
    pub max_iter: usize,
    /// Rank ceiling, at most `min(m, n)`. Increases are clipped to it.
    pub max_rank: Option<usize>,
    /// End a fixed-rank phase early, after an exact check, once the estimate
    /// falls below `tol / 2`.
    pub early_exit: bool,
    /// Seed of the Hutch++ test vectors and the random rank-update padding.
    pub seed: u64,
    /// Line-search, metric, preconditioner and initial-guess settings; the
    /// rank is taken from `r0`.
    pub inner: RnlcgOptions,
}

impl RramOptions {
    pub fn new(r0: usize, r_up: usize) -> Self {
        RramOptions {
            r0,
            r_up,
            eps_sigma: 1e-8,
            tol: 1e-6,
            w_len: 3,
            fact: 0.75,
            hutch_budget: 5,
            max_iter: 1000,
            max_rank: None,
            early_exit: false,
            seed: 0,
            inner: RnlcgOptions::new(r0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_sigma > 0.0 && self.eps_sigma < 1.0) {
            return Err(Error::InvalidArgument(format!("ε_σ = {} not in (0, 1)", self.eps_sigma)));
        }
        if self.w_len < 2 {
            return Err(Error::InvalidArgument("plateau window must be at least 2".into()));
        }
        if !(self.fact > 0.0 && self.fact < 1.0) {
            return Err(Error::InvalidArgument(format!("plateau factor {} not in (0, 1)", self.fact)));
        }
        if self.r0 == 0 || self.r_up == 0 {
            return Err(Error::InvalidArgument("ranks must be positive".into()));
        }
        self.inner.validate()
    }
}

fn tag(row: &mut TraceRow, event: &str) {
    if row.event.is_empty() {
        row.event = event.to_string();
    } else {
        row.event = format!("{};{event}", row.event);
    }
}

/// Riemannian rank-adaptive method.
///
/// Every row of the trace describes one R-NLCG iteration. Rank changes are
/// applied at the end of the iteration they are tagged on: `rank` and `f`
/// are recorded after the change, `res_rel` before it.
pub fn rram_solve(op: &MultitermOperator, rhs: &LowRankRhs, opts: &RramOptions) -> Result<SolveOutcome> {
    opts.validate()?;
    let (m, n) = (op.rows(), op.cols());
    let mut inner = opts.inner.clone();
    inner.rank = opts.r0;
    let x0 = inner.initial_point(m, n)?;
    let mut state = Rnlcg::new(op, rhs, x0, &inner)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let hutch = HutchPlusPlus::new(n, opts.hutch_budget, &mut rng)?;
    let fnorm = state.rhs_norm();
    let max_rank = opts.max_rank.unwrap_or(usize::MAX).min(m.min(n));

    let mut trace = SolveTrace::new();
    let mut row = TraceRow::new(0, state.objective(), state.point().rank());
    let res0 = state.residual_rel();
    row.res_rel = Some(res0);
    row.event = "init".into();
    trace.push(row)?;
    if res0 <= opts.tol {
        tag(trace.last_mut().expect("row"), "converged");
        return Ok(SolveOutcome { x: state.into_point(), trace, status: Status::Converged });
    }

    let mut k = 0usize;
    let status = 'outer: loop {
        let mut history: Vec<f64> = Vec::new();
        // Fixed-rank phase.
        loop {
            if k >= opts.max_iter {
                let res = state.residual_rel();
                let last = trace.last_mut().expect("row");
                last.res_rel = Some(res);
                last.res_kind = ResKind::Exact;
                break 'outer if res <= opts.tol { Status::Converged } else { Status::MaxIter };
            }
            let rep = state.step()?;
            k += 1;
            let r = state.point().rank();
            let mut row = TraceRow::new(k, state.objective(), r);
            row.beta = rep.beta;
            row.alpha = rep.alpha;
            row.backtracks = rep.backtracks;
            if rep.reset {
                tag(&mut row, "reset");
            }
            if !rep.accepted {
                tag(&mut row, if rep.gpg == 0.0 { "stationary" } else { "line_search_failure" });
                trace.push(row)?;
                break;
            }
            let est = hutch.norm(state.residual()) / fnorm;
            row.res_rel = Some(est);
            row.res_kind = ResKind::Hutchpp;
            if let Some((xd, delta)) = rank_decrease(state.point(), opts.eps_sigma) {
                let rd = xd.rank();
                state.jump(xd, &delta)?;
                row.rank = rd;
                row.f = state.objective();
                tag(&mut row, &format!("rank_down:{r}→{rd}"));
                trace.push(row)?;
                history.clear();
                continue;
            }
            history.push(est.max(f64::MIN_POSITIVE).log10());
            if opts.early_exit && est <= 0.5 * opts.tol {
                let res = state.residual_rel();
                if res <= opts.tol {
                    row.res_rel = Some(res);
                    row.res_kind = ResKind::Exact;
                    tag(&mut row, "converged");
                    trace.push(row)?;
                    break 'outer Status::Converged;
                }
            }
            if plateau_detect(&history, opts.w_len, opts.fact) {
                tag(&mut row, "plateau");
                trace.push(row)?;
                break;
            }
            trace.push(row)?;
        }
        let res = state.residual_rel();
        {
            let last = trace.last_mut().expect("row");
            last.res_rel = Some(res);
            last.res_kind = ResKind::Exact;
        }
        if res <= opts.tol {
            tag(trace.last_mut().expect("row"), "converged");
            break Status::Converged;
        }
        let r = state.point().rank();
        if r >= max_rank || k >= opts.max_iter {
            break if k >= opts.max_iter { Status::MaxIter } else { Status::Stagnation };
        }
        // Near the ceiling only the remaining headroom is added.
        let inc = rank_increase(state.point(), op, rhs, opts.r_up.min(max_rank - r), &mut rng)?;
        let rn = inc.x.rank();
        state.jump(inc.x, &inc.delta)?;
        let last = trace.last_mut().expect("row");
        last.rank = rn;
        last.f = state.objective();
        tag(last, &format!("rank_up:{r}→{rn}"));
    };
    Ok(SolveOutcome { x: state.into_point(), trace, status })
}
