use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numkit::{qr_thin, svd_thin, Mat, Vector};

use super::factored::FactoredMatrix;
use super::metric::KroneckerMetric;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Relative level below which singular values count as numerically zero.
pub const RANK_FLOOR: f64 = 1e2 * f64::EPSILON;

/// Weighted thin SVD `Z = Ũ diag(σ) Ṽᵀ` with `ŨᵀEŨ = I`, `ṼᵀDṼ = I`.
#[derive(Debug, Clone)]
pub struct WeightedSvd {
    pub u: Mat,
    pub s: Vector,
    pub v: Mat,
    /// `E Ũ`.
    pub eu: Mat,
    /// `D Ṽ`.
    pub dv: Mat,
}

/// Weighted SVD of a factored matrix, via QR of `C_E L` and `C_D R`.
pub fn weighted_svd(z: &FactoredMatrix, metric: &KroneckerMetric) -> Result<WeightedSvd> {
    check_dims(z.rows(), z.cols(), metric)?;
    let (ql, rl) = qr_thin(&metric.e.c_mul(&z.left));
    let (qr, rr) = qr_thin(&metric.d.c_mul(&z.right));
    let (uc, s, vc) = svd_thin(&(rl * rr.transpose()))?;
    let qu = ql * uc;
    let qv = qr * vc;
    Ok(WeightedSvd {
        u: metric.e.c_inv(&qu),
        s,
        v: metric.d.c_inv(&qv),
        eu: metric.e.ct_mul(&qu),
        dv: metric.d.ct_mul(&qv),
    })
}

/// Weighted SVD of a dense matrix, via the SVD of `C_E Z C_Dᵀ`.
pub fn weighted_svd_dense(z: &Mat, metric: &KroneckerMetric) -> Result<WeightedSvd> {
    check_dims(z.nrows(), z.ncols(), metric)?;
    let cz = metric.d.c_mul(&metric.e.c_mul(z).transpose()).transpose();
    let (u, s, v) = svd_thin(&cz)?;
    Ok(WeightedSvd {
        u: metric.e.c_inv(&u),
        s,
        v: metric.d.c_inv(&v),
        eu: metric.e.ct_mul(&u),
        dv: metric.d.ct_mul(&v),
    })
}

fn check_dims(m: usize, n: usize, metric: &KroneckerMetric) -> Result<()> {
    if m != metric.rows() || n != metric.cols() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix under a {}x{} metric",
            m,
            n,
            metric.rows(),
            metric.cols()
        )));
    }
    Ok(())
}

/// A rank-`r` matrix `Ũ diag(σ) Ṽᵀ` in weighted SVD form.
#[derive(Debug, Clone)]
pub struct FixedRankPoint {
    u: Mat,
    s: Vector,
    v: Mat,
    eu: Mat,
    dv: Mat,
    metric: Arc<KroneckerMetric>,
    id: u64,
    deficient: bool,
}

impl FixedRankPoint {
    /// Builds a point from weighted factors; `ŨᵀEŨ = I` and `ṼᵀDṼ = I` are
    /// checked to `1e-10`, and the triplets are sorted by `σ`.
    pub fn from_parts(u: Mat, s: Vector, v: Mat, metric: Arc<KroneckerMetric>) -> Result<Self> {
        check_dims(u.nrows(), v.nrows(), &metric)?;
        let r = s.len();
        if u.ncols() != r || v.ncols() != r {
            return Err(Error::DimensionMismatch("point factors and singular values".into()));
        }
        if s.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidArgument("singular values must be positive".into()));
        }
        let eu = metric.e.mul(&u);
        let dv = metric.d.mul(&v);
        let eye = Mat::identity(r, r);
        if (u.transpose() * &eu - &eye).norm() > 1e-10 || (v.transpose() * &dv - &eye).norm() > 1e-10 {
            return Err(Error::InvalidArgument("factors are not metric-orthonormal".into()));
        }
        Ok(Self::assemble(WeightedSvd { u, s, v, eu, dv }, metric, false))
    }

    /// Sorts triplets by decreasing `σ` and stamps a new identity.
    pub(crate) fn assemble(w: WeightedSvd, metric: Arc<KroneckerMetric>, deficient: bool) -> Self {
        let r = w.s.len();
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&i, &j| w.s[j].total_cmp(&w.s[i]).then(i.cmp(&j)));
        let pick = |a: &Mat| Mat::from_fn(a.nrows(), r, |i, j| a[(i, order[j])]);
        FixedRankPoint {
            u: pick(&w.u),
            s: Vector::from_fn(r, |i, _| w.s[order[i]]),
            v: pick(&w.v),
            eu: pick(&w.eu),
            dv: pick(&w.dv),
            metric,
            id: fresh_id(),
            deficient,
        }
    }

    /// Random point with Gaussian factors scaled to unit Frobenius norm.
    pub fn random<R: Rng>(
        m: usize,
        n: usize,
        r: usize,
        metric: Arc<KroneckerMetric>,
        rng: &mut R,
    ) -> Result<Self> {
        if r == 0 || r > m.min(n) {
            return Err(Error::InvalidArgument(format!("rank {r} for a {m}x{n} matrix")));
        }
        let l = Mat::from_fn(m, r, |_, _| rng.sample(StandardNormal));
        let rt = Mat::from_fn(n, r, |_, _| rng.sample(StandardNormal));
        let (p, _) = truncate(&FactoredMatrix::new(l, rt)?, r, metric)?;
        let nrm = p.factored().frob_norm();
        Ok(p.with_singular_values(&p.s / nrm))
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn cols(&self) -> usize {
        self.v.nrows()
    }

    pub fn u(&self) -> &Mat {
        &self.u
    }

    pub fn s(&self) -> &Vector {
        &self.s
    }

    pub fn v(&self) -> &Mat {
        &self.v
    }

    /// Cached `E Ũ`.
    pub fn eu(&self) -> &Mat {
        &self.eu
    }

    /// Cached `D Ṽ`.
    pub fn dv(&self) -> &Mat {
        &self.dv
    }

    pub fn metric(&self) -> &Arc<KroneckerMetric> {
        &self.metric
    }

    /// Identity used to match tangent vectors with their base point.
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Set when some singular values were floored after a retraction.
    pub fn is_deficient(&self) -> bool {
        self.deficient
    }

    /// `(ŨΣ, Ṽ)`.
    pub fn factored(&self) -> FactoredMatrix {
        let mut l = self.u.clone();
        for (j, &sj) in self.s.iter().enumerate() {
            l.column_mut(j).scale_mut(sj);
        }
        FactoredMatrix { left: l, right: self.v.clone() }
    }

    pub fn dense(&self) -> Mat {
        self.factored().dense()
    }

    /// `‖X‖_B = ‖σ‖`.
    pub fn b_norm(&self) -> f64 {
        self.s.norm()
    }

    /// Same factors with new singular values (a new point).
    pub fn with_singular_values(&self, s: Vector) -> Self {
        assert_eq!(s.len(), self.rank());
        let w = WeightedSvd {
            u: self.u.clone(),
            s,
            v: self.v.clone(),
            eu: self.eu.clone(),
            dv: self.dv.clone(),
        };
        Self::assemble(w, self.metric.clone(), self.deficient)
    }

    /// Leading `k` triplets.
    pub fn leading(&self, k: usize) -> Self {
        let k = k.min(self.rank());
        let w = WeightedSvd {
            u: self.u.columns(0, k).into_owned(),
            s: self.s.rows(0, k).into_owned(),
            v: self.v.columns(0, k).into_owned(),
            eu: self.eu.columns(0, k).into_owned(),
            dv: self.dv.columns(0, k).into_owned(),
        };
        Self::assemble(w, self.metric.clone(), false)
    }
}

/// Best rank-`r` approximation in the `B`-norm.
///
/// Returns the point and a flag that is set when the numerical rank of `Z`
/// is below `r`, in which case the point has that smaller rank.
pub fn truncate(
    z: &FactoredMatrix,
    r: usize,
    metric: Arc<KroneckerMetric>,
) -> Result<(FixedRankPoint, bool)> {
    if r == 0 {
        return Err(Error::InvalidArgument("truncation rank must be positive".into()));
    }
    let w = weighted_svd(z, &metric)?;
    Ok(truncate_svd(w, r, metric))
}

/// Dense-input variant of [`truncate`].
pub fn truncate_dense(
    z: &Mat,
    r: usize,
    metric: Arc<KroneckerMetric>,
) -> Result<(FixedRankPoint, bool)> {
    if r == 0 {
        return Err(Error::InvalidArgument("truncation rank must be positive".into()));
    }
    let w = weighted_svd_dense(z, &metric)?;
    Ok(truncate_svd(w, r, metric))
}

fn truncate_svd(w: WeightedSvd, r: usize, metric: Arc<KroneckerMetric>) -> (FixedRankPoint, bool) {
    let s1 = w.s.iter().copied().fold(0.0, f64::max);
    let numerical = w.s.iter().filter(|&&x| x > RANK_FLOOR * s1 && x > 0.0).count();
    let k = r.min(numerical);
    let cut = WeightedSvd {
        u: w.u.columns(0, k).into_owned(),
        s: w.s.rows(0, k).into_owned(),
        v: w.v.columns(0, k).into_owned(),
        eu: w.eu.columns(0, k).into_owned(),
        dv: w.dv.columns(0, k).into_owned(),
    };
    (FixedRankPoint::assemble(cut, metric, false), k < r)
}

/// Weighted QR data of `[Ũ, Ũ_p]` and `[Ṽ, Ṽ_p]`, shared by every trial
/// step of a line search along one direction.
#[derive(Debug, Clone)]
pub struct RetractionPlan<'a> {
    x: &'a FixedRankPoint,
    m: Mat,
    qu: Mat,
    equ: Mat,
    ru: Mat,
    qv: Mat,
    dqv: Mat,
    rv: Mat,
}

impl<'a> RetractionPlan<'a> {
    pub fn new(x: &'a FixedRankPoint, xi: &super::TangentVector) -> Result<Self> {
        xi.check_base(x)?;
        let metric = x.metric();
        let (q, ru) = qr_thin(&metric.e.c_mul(&crate::numkit::hcat(&[x.u(), &xi.up])));
        let qu = metric.e.c_inv(&q);
        let equ = metric.e.ct_mul(&q);
        let (q, rv) = qr_thin(&metric.d.c_mul(&crate::numkit::hcat(&[x.v(), &xi.vp])));
        let qv = metric.d.c_inv(&q);
        let dqv = metric.d.ct_mul(&q);
        Ok(RetractionPlan { x, m: xi.m.clone(), qu, equ, ru, qv, dqv, rv })
    }

    /// `B`-truncation of `X + t ξ` to rank `r`.
    pub fn at(&self, t: f64) -> Result<FixedRankPoint> {
        if t == 0.0 {
            return Ok(self.x.clone());
        }
        Ok(self.step(t)?.0)
    }

    /// The retracted point `Y` together with `Y − X` in factored form. The
    /// difference is formed in the shared basis of `[Ũ, Ũ_p]`, `[Ṽ, Ṽ_p]`, so
    /// it carries no cancellation error from subtracting `X`.
    pub fn step(&self, t: f64) -> Result<(FixedRankPoint, FactoredMatrix)> {
        let x = self.x;
        let r = x.rank();
        let mut k = Mat::zeros(2 * r, 2 * r);
        for i in 0..r {
            for j in 0..r {
                k[(i, j)] = t * self.m[(i, j)];
            }
            k[(i, i)] += x.s()[i];
            k[(i, r + i)] = t;
            k[(r + i, i)] = t;
        }
        let core = &self.ru * k * self.rv.transpose();
        let (uc, s, vc) = svd_thin(&core)?;
        let s1 = s[0];
        if !(s1 > 0.0) || !s1.is_finite() {
            return Err(Error::Degenerate("retraction produced a zero matrix".into()));
        }
        let uc = uc.columns(0, r);
        let vc = vc.columns(0, r);
        let mut deficient = false;
        let floor = RANK_FLOOR * s1;
        let s = Vector::from_fn(r, |i, _| {
            if s[i] < floor {
                deficient = true;
                floor
            } else {
                s[i]
            }
        });
        let mut k0 = Mat::zeros(2 * r, 2 * r);
        for i in 0..r {
            k0[(i, i)] = x.s()[i];
        }
        let diff = uc * Mat::from_diagonal(&s) * vc.transpose() - &self.ru * k0 * self.rv.transpose();
        let delta = FactoredMatrix { left: &self.qu * diff, right: self.qv.clone() };
        let w = WeightedSvd {
            u: &self.qu * uc,
            s,
            v: &self.qv * vc,
            eu: &self.equ * uc,
            dv: &self.dqv * vc,
        };
        Ok((FixedRankPoint::assemble(w, x.metric().clone(), deficient), delta))
    }
}

/// Metric projection retraction `R_X(t ξ)`.
pub fn retract(x: &FixedRankPoint, xi: &super::TangentVector, t: f64) -> Result<FixedRankPoint> {
    RetractionPlan::new(x, xi)?.at(t)
}
