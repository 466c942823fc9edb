use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real ADI shift pairs `(p_j, q_j)` and the spectral intervals used to
/// generate them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSet {
    pub pairs: Vec<(f64, f64)>,
    /// Interval `[a, b]` containing the spectrum of the pencil `(A, E)`.
    pub ab: (f64, f64),
    /// Interval `[c, d]` containing the spectrum of the pencil `(B, D)`.
    pub cd: (f64, f64),
}

impl ShiftSet {
    /// Shift pairs given explicitly. Admissibility is checked when shifted
    /// matrices are factorized.
    pub fn from_pairs(pairs: Vec<(f64, f64)>, ab: (f64, f64), cd: (f64, f64)) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("empty shift set".into()));
        }
        if pairs.iter().any(|&(p, q)| !p.is_finite() || !q.is_finite()) {
            return Err(Error::InvalidArgument("non-finite shift".into()));
        }
        Ok(ShiftSet { pairs, ab, cd })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `q_j < a` and `p_j > −c` for every pair.
    pub fn admissible(&self) -> bool {
        self.pairs.iter().all(|&(p, q)| q < self.ab.0 && p > -self.cd.0)
    }

    /// Value of the ADI rational function at `(λ, μ)`.
    pub fn rational(&self, lambda: f64, mu: f64) -> f64 {
        self.pairs
            .iter()
            .map(|&(p, q)| ((lambda - p) * (mu + q) / ((lambda - q) * (mu + p))).abs())
            .product()
    }

    /// Maximum of the rational function over `g × g` log-spaced points of
    /// `[a, b] × [c, d]`.
    pub fn grid_bound(&self, ab: (f64, f64), cd: (f64, f64), g: usize) -> f64 {
        let ls = log_grid(ab.0, ab.1, g);
        let ms = log_grid(cd.0, cd.1, g);
        let mut best = 0.0f64;
        for &l in &ls {
            for &m in &ms {
                best = best.max(self.rational(l, m));
            }
        }
        best
    }
}

/// `g` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, g: usize) -> Vec<f64> {
    if g <= 1 || lo == hi {
        return vec![lo; g.max(1)];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut v: Vec<f64> = (0..g).map(|i| (a + (b - a) * i as f64 / (g - 1) as f64).exp()).collect();
    v[0] = lo;
    v[g - 1] = hi;
    v
}

fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        if (a - b).abs() <= 1e-16 * a {
            break;
        }
        let an = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = an;
    }
    a
}

/// Complete elliptic integral of the first kind, from the complementary
/// modulus `k'`.
fn ellip_k(kp: f64) -> f64 {
    PI / (2.0 * agm(1.0, kp))
}

/// Jacobi `dn(u, k)` by the descending Landen (AGM) scheme.
fn jacobi_dn(u: f64, k: f64, kp: f64) -> f64 {
    if k == 0.0 {
        return 1.0;
    }
    let mut a = vec![1.0];
    let mut c = vec![k];
    let mut b = kp;
    while c.last().unwrap().abs() > 1e-16 && a.len() < 64 {
        let an = 0.5 * (a.last().unwrap() + b);
        let cn = 0.5 * (a.last().unwrap() - b);
        b = (a.last().unwrap() * b).sqrt();
        a.push(an);
        c.push(cn);
    }
    let n = a.len() - 1;
    let mut phi = (1u64 << n) as f64 * a[n] * u;
    let mut prev = phi;
    for i in (1..=n).rev() {
        prev = phi;
        phi = 0.5 * (phi + (c[i] / a[i] * phi.sin()).asin());
    }
    if n == 0 {
        return (1.0 - (k * u.sin()).powi(2)).sqrt();
    }
    phi.cos() / (prev - phi).cos()
}

/// Möbius map determined by three point correspondences `zᵢ ↦ wᵢ`.
struct Mobius {
    z: [f64; 3],
    w: [f64; 3],
}

impl Mobius {
    /// Cross-ratio coordinate sending `p[0] → 0`, `p[1] → 1`, `p[2] → ∞`.
    fn to_std(p: &[f64; 3], z: f64) -> f64 {
        (z - p[0]) * (p[1] - p[2]) / ((z - p[2]) * (p[1] - p[0]))
    }

    fn from_std(p: &[f64; 3], s: f64) -> f64 {
        if s.is_infinite() {
            return p[2];
        }
        let kappa = (p[1] - p[2]) / (p[1] - p[0]);
        (s * p[2] - kappa * p[0]) / (s - kappa)
    }

    fn inverse(&self, w: f64) -> f64 {
        Self::from_std(&self.z, Self::to_std(&self.w, w))
    }
}

/// Wachspress shift pairs for `Λ(A, E) ⊂ [a, b]`, `Λ(B, D) ⊂ [c, d]`.
///
/// The pair problem on `[a, b] × [−d, −c]` is mapped to the symmetric one on
/// `[k', 1] ∪ [−1, −k']`, whose optimal zeros are `dn((2j−1)K/(2J), k)`.
pub fn wachspress_shifts(a: f64, b: f64, c: f64, d: f64, j: usize) -> Result<ShiftSet> {
    if !(a > 0.0 && a <= b && c > 0.0 && c <= d) || !b.is_finite() || !d.is_finite() {
        return Err(Error::InvalidArgument(format!("bad spectral intervals [{a}, {b}], [{c}, {d}]")));
    }
    if j == 0 {
        return Err(Error::InvalidArgument("need at least one shift".into()));
    }
    let flat = |lo: f64, hi: f64| hi - lo <= 1e-14 * hi;
    let (ab, cd) = ((a, b), (c, d));
    match (flat(a, b), flat(c, d)) {
        (true, true) => return ShiftSet::from_pairs(vec![(a, -c)], ab, cd),
        (true, false) => return ShiftSet::from_pairs(vec![(a, -(c * d).sqrt())], ab, cd),
        (false, true) => return ShiftSet::from_pairs(vec![((a * b).sqrt(), -c)], ab, cd),
        _ => {}
    }
    let cross = (a + d) * (b + c) / ((b + d) * (a + c));
    let nu = 2.0 * cross - 1.0;
    let kp = 1.0 / (nu + (nu * nu - 1.0).max(0.0).sqrt());
    let k = (1.0 - kp * kp).max(0.0).sqrt();
    let big_k = ellip_k(kp);
    let map = Mobius { z: [b, a, -d], w: [1.0, kp, -1.0] };
    let pairs = (1..=j)
        .map(|i| {
            let w = jacobi_dn((2 * i - 1) as f64 * big_k / (2 * j) as f64, k, kp);
            (map.inverse(w), map.inverse(-w))
        })
        .collect();
    ShiftSet::from_pairs(pairs, ab, cd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dn_limits() {
        assert!((jacobi_dn(0.3, 0.0, 1.0) - 1.0).abs() < 1e-15);
        // dn(K/2, k) = √k'
        let kp: f64 = 0.3;
        let k = (1.0 - kp * kp).sqrt();
        assert!((jacobi_dn(0.5 * ellip_k(kp), k, kp) - kp.sqrt()).abs() < 1e-13);
        assert!((jacobi_dn(0.0, k, kp) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn elliptic_k_at_zero_modulus() {
        assert!((ellip_k(1.0) - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn mobius_hits_its_points() {
        let m = Mobius { z: [10.0, 1.0, -5.0], w: [1.0, 0.2, -1.0] };
        for i in 0..3 {
            assert!((m.inverse(m.w[i]) - m.z[i]).abs() < 1e-12 * m.z[i].abs().max(1.0));
        }
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1.0, 100.0, 3);
        assert!((g[1] - 10.0).abs() < 1e-12 && g[2] == 100.0);
    }
}
