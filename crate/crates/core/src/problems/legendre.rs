use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numkit::{eig_sym, Mat, SparseMatrix};

/// Gauss–Legendre nodes and weights on `[−1, 1]` (weights sum to 2), from the
/// eigen-decomposition of the Jacobi matrix.
pub fn gauss_legendre(k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if k == 0 {
        return Err(Error::InvalidArgument("quadrature needs at least one node".into()));
    }
    let mut j = Mat::zeros(k, k);
    for s in 1..k {
        let b = s as f64 / ((4 * s * s - 1) as f64).sqrt();
        j[(s - 1, s)] = b;
        j[(s, s - 1)] = b;
    }
    let (v, lam) = eig_sym(&j)?;
    let nodes: Vec<f64> = lam.iter().cloned().collect();
    let weights = (0..k).map(|i| 2.0 * v[(0, i)] * v[(0, i)]).collect();
    Ok((nodes, weights))
}

/// `ψ_0(y), …, ψ_p(y)` with `ψ_s = √(2s+1) P_s`, orthonormal for the uniform
/// probability measure on `[−1, 1]`.
pub fn legendre_normalized(p: usize, y: f64) -> Vec<f64> {
    let mut pl = vec![0.0; p + 1];
    pl[0] = 1.0;
    if p >= 1 {
        pl[1] = y;
    }
    for s in 1..p {
        let sf = s as f64;
        pl[s + 1] = ((2.0 * sf + 1.0) * y * pl[s] - sf * pl[s - 1]) / (sf + 1.0);
    }
    pl.iter().enumerate().map(|(s, v)| v * ((2 * s + 1) as f64).sqrt()).collect()
}

/// Multi-indices in `q` variables with total degree at most `p`, graded
/// lexicographic order (degree first, then descending lexicographic).
pub fn total_degree_indices(q: usize, p: usize) -> Vec<Vec<usize>> {
    fn rec(q: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == q {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for v in (0..=left).rev() {
            cur.push(v);
            rec(q, left - v, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for deg in 0..=p {
        rec(q, deg, &mut Vec::with_capacity(q), &mut out);
    }
    out
}

/// `T[a][b] = E[y ψ_a(y) ψ_b(y)]` for the uniform measure, together with the
/// parametric matrices `G_k` over a total-degree basis.
#[derive(Debug, Clone)]
pub struct LegendreProducts {
    pub indices: Vec<Vec<usize>>,
    pub table: Mat,
}

impl LegendreProducts {
    /// One-dimensional table by `nodes`-point Gauss–Legendre quadrature.
    pub fn new(q: usize, p: usize, nodes: usize) -> Result<Self> {
        if q == 0 || p == 0 {
            return Err(Error::InvalidArgument("need q ≥ 1 and p ≥ 1".into()));
        }
        let (x, w) = gauss_legendre(nodes)?;
        let mut table = Mat::zeros(p + 1, p + 1);
        for (xi, wi) in x.iter().zip(&w) {
            let psi = legendre_normalized(p, *xi);
            for a in 0..=p {
                for b in 0..=p {
                    table[(a, b)] += 0.5 * wi * xi * psi[a] * psi[b];
                }
            }
        }
        Ok(LegendreProducts { indices: total_degree_indices(q, p), table })
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    /// `G_k[s, t] = E[y_k ψ_s ψ_t]` for coordinate `k` (zero-based). Entries
    /// below `1e-14` (quadrature roundoff on structural zeros) are dropped.
    pub fn g(&self, k: usize) -> Result<SparseMatrix> {
        let pos: HashMap<&[usize], usize> =
            self.indices.iter().enumerate().map(|(i, a)| (a.as_slice(), i)).collect();
        let mut t = Vec::new();
        for (s, a) in self.indices.iter().enumerate() {
            let p = self.table.nrows() - 1;
            for v in 0..=p {
                let mut b = a.clone();
                b[k] = v;
                if let Some(&col) = pos.get(b.as_slice()) {
                    let val = self.table[(a[k], v)];
                    if val.abs() > 1e-14 {
                        t.push((s, col, val));
                    }
                }
            }
        }
        let n = self.dim();
        SparseMatrix::from_triplets(n, n, &t)
    }
}
