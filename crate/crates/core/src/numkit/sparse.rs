use super::dense::Mat;
use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= rows || j >= cols {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({i},{j}) outside {rows}x{cols}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("nonfinite entry at ({i},{j})")));
            }
            t.push((i, j, v));
        }
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..rows {
            indptr[i + 1] += indptr[i];
        }
        Ok(SparseMatrix { rows, cols, indptr, indices, values })
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        SparseMatrix {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    /// Symmetric tridiagonal matrix from its diagonal and off-diagonal.
    pub fn sym_tridiag(diag: &[f64], off: &[f64]) -> Self {
        let n = diag.len();
        assert!(off.len() + 1 == n || (n == 0 && off.is_empty()));
        let mut t = Vec::with_capacity(3 * n);
        for i in 0..n {
            if i > 0 {
                t.push((i, i - 1, off[i - 1]));
            }
            t.push((i, i, diag[i]));
            if i + 1 < n {
                t.push((i, i + 1, off[i]));
            }
        }
        Self::from_triplets(n, n, &t).expect("valid tridiagonal")
    }

    /// Sparse copy of a dense matrix, dropping exact zeros.
    pub fn from_dense(a: &Mat) -> Self {
        let mut t = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let v = a[(i, j)];
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), &t).expect("dense entries in range")
    }

    pub fn to_dense(&self) -> Mat {
        let mut a = Mat::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                a[(i, self.indices[k])] += self.values[k];
            }
        }
        a
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (idx, val) = self.row(i);
        match idx.binary_search(&j) {
            Ok(k) => val[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.rows {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                out.push((i, j, v));
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.cols, self.rows, &t).expect("transpose in range")
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `a·self + b·other`.
    pub fn axpby(&self, a: f64, other: &SparseMatrix, b: f64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (i, j, a * v)).collect();
        t.extend(other.triplets().into_iter().map(|(i, j, v)| (i, j, b * v)));
        Self::from_triplets(self.rows, self.cols, &t)
    }

    /// Largest entrywise asymmetry `max |a_ij − a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        self.triplets()
            .into_iter()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.asymmetry() <= rel_tol * self.max_abs().max(f64::MIN_POSITIVE)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            *yi = s;
        }
    }

    /// Sparse times dense, `self · X`.
    pub fn mul_dense(&self, x: &Mat) -> Mat {
        assert_eq!(x.nrows(), self.cols, "sparse-dense product shape");
        let mut y = Mat::zeros(self.rows, x.ncols());
        for j in 0..x.ncols() {
            let xs = x.column(j);
            let xs = xs.as_slice();
            let mut ys = y.column_mut(j);
            self.matvec(xs, ys.as_mut_slice());
        }
        y
    }

    /// Gershgorin interval `[min(a_ii − Σ|a_ij|), max(a_ii + Σ|a_ij|)]`.
    pub fn gershgorin(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.rows {
            let (idx, val) = self.row(i);
            let mut d = 0.0;
            let mut off = 0.0;
            for (&j, &v) in idx.iter().zip(val) {
                if j == i {
                    d += v;
                } else {
                    off += v.abs();
                }
            }
            lo = lo.min(d - off);
            hi = hi.max(d + off);
        }
        (lo, hi)
    }

    /// Symmetric permutation `P A Pᵀ` with `perm[new] = old`.
    pub fn permute_sym(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0usize; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let t: Vec<_> = self
            .triplets()
            .into_iter()
            .map(|(i, j, v)| (inv[i], inv[j], v))
            .collect();
        Self::from_triplets(self.rows, self.cols, &t).expect("permutation in range")
    }

}
