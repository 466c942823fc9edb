//! The multiterm operator `X ↦ Σ Aᵢ X Bᵢᵀ`, the quadratic objective and the
//! factored residual.

use crate::error::{Error, Result};
use crate::geometry::{FactoredMatrix, FixedRankPoint, KroneckerMetric};
use crate::numkit::{eig_sym, hcat, inner, Mat, SparseMatrix};

/// Right-hand side `F = F_L F_Rᵀ`.
pub type LowRankRhs = FactoredMatrix;

#[derive(Debug, Clone)]
pub struct MultitermOperator {
    a: Vec<SparseMatrix>,
    b: Vec<SparseMatrix>,
}

impl MultitermOperator {
    /// Checks shapes and symmetry (to `1e-12` relative) of every coefficient.
    pub fn new(a: Vec<SparseMatrix>, b: Vec<SparseMatrix>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::InvalidArgument(format!(
                "need matching nonempty coefficient lists, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        let (m, n) = (a[0].nrows(), b[0].nrows());
        for (i, (ai, bi)) in a.iter().zip(&b).enumerate() {
            if ai.nrows() != m || ai.ncols() != m || bi.nrows() != n || bi.ncols() != n {
                return Err(Error::DimensionMismatch(format!("term {i} coefficient shapes")));
            }
            if !ai.is_symmetric(1e-12) || !bi.is_symmetric(1e-12) {
                return Err(Error::InvalidArgument(format!("term {i} is not symmetric")));
            }
        }
        Ok(MultitermOperator { a, b })
    }

    pub fn terms(&self) -> usize {
        self.a.len()
    }

    pub fn rows(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn cols(&self) -> usize {
        self.b[0].nrows()
    }

    pub fn a(&self) -> &[SparseMatrix] {
        &self.a
    }

    pub fn b(&self) -> &[SparseMatrix] {
        &self.b
    }

    pub fn scaled(&self, c: f64) -> Self {
        MultitermOperator { a: self.a.iter().map(|x| x.scaled(c)).collect(), b: self.b.clone() }
    }

    fn check(&self, z: &FactoredMatrix) -> Result<()> {
        if z.rows() != self.rows() || z.cols() != self.cols() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} operand for a {}x{} operator",
                z.rows(),
                z.cols(),
                self.rows(),
                self.cols()
            )));
        }
        Ok(())
    }

    /// Factored `Σ Aᵢ L (Bᵢ R)ᵀ` of width `ℓk`.
    pub fn apply(&self, z: &FactoredMatrix) -> Result<FactoredMatrix> {
        self.check(z)?;
        let l: Vec<Mat> = self.a.iter().map(|a| a.mul_dense(&z.left)).collect();
        let r: Vec<Mat> = self.b.iter().map(|b| b.mul_dense(&z.right)).collect();
        Ok(FactoredMatrix {
            left: hcat(&l.iter().collect::<Vec<_>>()),
            right: hcat(&r.iter().collect::<Vec<_>>()),
        })
    }

    pub fn apply_point(&self, x: &FixedRankPoint) -> Result<FactoredMatrix> {
        self.apply(&x.factored())
    }

    pub fn apply_dense(&self, x: &Mat) -> Mat {
        let mut out = Mat::zeros(self.rows(), self.cols());
        for (a, b) in self.a.iter().zip(&self.b) {
            out += b.mul_dense(&a.mul_dense(x).transpose()).transpose();
        }
        out
    }

    /// `⟨A Z, Z⟩` for a factored `Z`, without forming the product.
    pub fn energy(&self, z: &FactoredMatrix) -> Result<f64> {
        self.check(z)?;
        let mut s = 0.0;
        for (a, b) in self.a.iter().zip(&self.b) {
            let ga = z.left.transpose() * a.mul_dense(&z.left);
            let gb = z.right.transpose() * b.mul_dense(&z.right);
            s += inner(&ga, &gb);
        }
        Ok(s)
    }

    /// Dense Kronecker matrix `Σ Bᵢ ⊗ Aᵢ`; small instances only.
    pub fn kron_matrix(&self) -> Mat {
        let mn = self.rows() * self.cols();
        let mut k = Mat::zeros(mn, mn);
        for (a, b) in self.a.iter().zip(&self.b) {
            k += b.to_dense().kronecker(&a.to_dense());
        }
        k
    }

    /// Smallest eigenvalue of the Kronecker matrix, for `mn ≤ 4096`.
    pub fn min_eigenvalue_dense(&self) -> Result<f64> {
        if self.rows() * self.cols() > 4096 {
            return Err(Error::InvalidArgument("dense SPD check limited to mn ≤ 4096".into()));
        }
        let (_, l) = eig_sym(&self.kron_matrix())?;
        Ok(l[0])
    }

    /// Residual `A X − F` in factored form together with the objective value.
    pub fn evaluate(&self, x: &FixedRankPoint, f: &LowRankRhs) -> Result<Evaluation> {
        let xf = x.factored();
        self.check(&xf)?;
        self.check(f)?;
        let mut left = Vec::with_capacity(self.terms() + 1);
        let mut right = Vec::with_capacity(self.terms() + 1);
        let mut quad = 0.0;
        for (a, b) in self.a.iter().zip(&self.b) {
            let al = a.mul_dense(&xf.left);
            let br = b.mul_dense(&xf.right);
            quad += inner(&(xf.left.transpose() * &al), &(xf.right.transpose() * &br));
            left.push(al);
            right.push(br);
        }
        let lin = inner(&(xf.left.transpose() * &f.left), &(xf.right.transpose() * &f.right));
        left.push(-&f.left);
        right.push(f.right.clone());
        Ok(Evaluation {
            residual: FactoredMatrix {
                left: hcat(&left.iter().collect::<Vec<_>>()),
                right: hcat(&right.iter().collect::<Vec<_>>()),
            },
            f: 0.5 * quad - lin,
        })
    }

    /// `R_L R_Rᵀ = A X − F`.
    pub fn residual(&self, x: &FixedRankPoint, f: &LowRankRhs) -> Result<FactoredMatrix> {
        Ok(self.evaluate(x, f)?.residual)
    }

    /// The Euclidean gradient of the objective, equal to the residual.
    pub fn euclidean_gradient(&self, x: &FixedRankPoint, f: &LowRankRhs) -> Result<FactoredMatrix> {
        self.residual(x, f)
    }

    /// `f(X) = ½⟨A X, X⟩ − ⟨X, F⟩`.
    pub fn objective(&self, x: &FixedRankPoint, f: &LowRankRhs) -> Result<f64> {
        let xf = x.factored();
        let lin = inner(&(xf.left.transpose() * &f.left), &(xf.right.transpose() * &f.right));
        Ok(0.5 * self.energy(&xf)? - lin)
    }

    /// `‖A X − F‖ / ‖F‖` in the Frobenius norm, or in the `B`-norm when a
    /// metric is given.
    pub fn residual_norm_exact(
        &self,
        x: &FixedRankPoint,
        f: &LowRankRhs,
        metric: Option<&KroneckerMetric>,
    ) -> Result<f64> {
        let r = self.residual(x, f)?;
        relative_norm(&r, f, metric)
    }
}

/// `‖R‖ / ‖F‖` in the chosen norm.
pub fn relative_norm(r: &FactoredMatrix, f: &LowRankRhs, metric: Option<&KroneckerMetric>) -> Result<f64> {
    let (nr, nf) = match metric {
        None => (r.frob_norm(), f.frob_norm()),
        Some(mt) => (r.b_norm(mt), f.b_norm(mt)),
    };
    if !(nf > 0.0) {
        return Err(Error::Degenerate("right-hand side is zero".into()));
    }
    Ok(nr / nf)
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub residual: FactoredMatrix,
    pub f: f64,
}
