//! Envelope (skyline) Cholesky factorization with a fill-reducing ordering.
//!
//! With `P A Pᵀ = L Lᵀ` the upper factor used by the weighted geometry is
//! `C = Lᵀ P`, so that `A = Cᵀ C`.

use super::dense::Mat;
use super::ordering::{envelope_size, rcm};
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SpdFactorization {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// First stored column of each row of `L`.
    first: Vec<usize>,
    /// Offset of row `i` in `vals`; row `i` holds columns `first[i]..=i`.
    start: Vec<usize>,
    vals: Vec<f64>,
    matrix: SparseMatrix,
}

impl SpdFactorization {
    /// Factorizes a symmetric matrix; returns [`Error::NotSpd`] at the first
    /// nonpositive pivot, reported in the original numbering.
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "factorization needs a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        let ident: Vec<usize> = (0..n).collect();
        let p = rcm(a);
        let perm = if envelope_size(a, &p) < envelope_size(a, &ident) { p } else { ident };
        let pa = a.permute_sym(&perm);

        let mut first: Vec<usize> = (0..n).collect();
        for i in 0..n {
            let (idx, _) = pa.row(i);
            if let Some(&j) = idx.first() {
                first[i] = first[i].min(j);
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for i in 0..n {
            start.push(acc);
            acc += i - first[i] + 1;
        }
        start.push(acc);
        let mut vals = vec![0.0; acc];
        for i in 0..n {
            let (idx, val) = pa.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                if j <= i {
                    vals[start[i] + j - first[i]] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = vals[start[i] + j - fi];
                let ri = start[i] + k0 - fi;
                let rj = start[j] + k0 - fj;
                for k in 0..(j - k0) {
                    s -= vals[ri + k] * vals[rj + k];
                }
                if j < i {
                    vals[start[i] + j - fi] = s / vals[start[j] + j - fj];
                } else {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotSpd { index: perm[i], pivot: s });
                    }
                    vals[start[i] + i - fi] = s.sqrt();
                }
            }
        }
        Ok(SpdFactorization { n, perm, first, start, vals, matrix: a.clone() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    /// Stored entries of the factor.
    pub fn factor_nnz(&self) -> usize {
        self.vals.len()
    }

    #[inline]
    fn l(&self, i: usize, j: usize) -> f64 {
        self.vals[self.start[i] + j - self.first[i]]
    }

    fn lower_solve(&self, y: &mut [f64]) {
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.vals[self.start[i]..self.start[i + 1]];
            let mut s = y[i];
            for (k, &lv) in row[..i - fi].iter().enumerate() {
                s -= lv * y[fi + k];
            }
            y[i] = s / row[i - fi];
        }
    }

    fn upper_solve(&self, y: &mut [f64]) {
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.vals[self.start[i]..self.start[i + 1]];
            let xi = y[i] / row[i - fi];
            y[i] = xi;
            for (k, &lv) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= lv * xi;
            }
        }
    }

    fn lower_mul(&self, y: &mut [f64]) {
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.vals[self.start[i]..self.start[i + 1]];
            y[i] = row.iter().enumerate().map(|(k, &lv)| lv * y[fi + k]).sum();
        }
    }

    fn upper_mul(&self, y: &mut [f64]) {
        // y ← Lᵀ y; entry i only receives contributions from rows ≥ i.
        let x = y.to_vec();
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let fi = self.first[i];
            for j in fi..=i {
                y[j] += self.l(i, j) * x[i];
            }
        }
    }

    fn to_perm(&self, x: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&o| x[o]).collect()
    }

    fn from_perm(&self, y: &[f64], out: &mut [f64]) {
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = y[new];
        }
    }

    fn map_columns(&self, b: &Mat, f: impl Fn(&Self, &mut [f64])) -> Mat {
        assert_eq!(b.nrows(), self.n, "factorization dimension mismatch");
        let mut out = Mat::zeros(self.n, b.ncols());
        for j in 0..b.ncols() {
            let col = b.column(j);
            let mut w = col.as_slice().to_vec();
            f(self, &mut w);
            out.column_mut(j).as_mut_slice().copy_from_slice(&w);
        }
        out
    }

    /// `A⁻¹ b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let mut y = self.to_perm(b);
        self.lower_solve(&mut y);
        self.upper_solve(&mut y);
        self.from_perm(&y, b);
    }

    /// `A⁻¹ B` for a block of right-hand sides.
    pub fn solve_many(&self, b: &Mat) -> Mat {
        self.map_columns(b, |s, w| s.solve_in_place(w))
    }

    /// `C x` with `C = Lᵀ P`.
    pub fn c_mul(&self, x: &Mat) -> Mat {
        self.map_columns(x, |s, w| {
            let mut y = s.to_perm(w);
            s.upper_mul(&mut y);
            w.copy_from_slice(&y);
        })
    }

    /// `C⁻¹ y = Pᵀ L⁻ᵀ y`.
    pub fn c_inv(&self, y: &Mat) -> Mat {
        self.map_columns(y, |s, w| {
            let mut t = w.to_vec();
            s.upper_solve(&mut t);
            s.from_perm(&t, w);
        })
    }

    /// `Cᵀ y = Pᵀ L y`.
    pub fn ct_mul(&self, y: &Mat) -> Mat {
        self.map_columns(y, |s, w| {
            let mut t = w.to_vec();
            s.lower_mul(&mut t);
            s.from_perm(&t, w);
        })
    }

    /// `C⁻ᵀ x = L⁻¹ P x`.
    pub fn ct_inv(&self, x: &Mat) -> Mat {
        self.map_columns(x, |s, w| {
            let mut y = s.to_perm(w);
            s.lower_solve(&mut y);
            w.copy_from_slice(&y);
        })
    }

    /// Dense upper factor `C`, for tests and oracles.
    pub fn c_dense(&self) -> Mat {
        self.c_mul(&Mat::identity(self.n, self.n))
    }
}
