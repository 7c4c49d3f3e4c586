//! Small dense helpers on top of `nalgebra` for the symmetric matrices used
//! throughout the crate (at most 8x8 in practice).

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

pub type Mat = DMatrix<f64>;

/// Cholesky factor of a symmetric positive-definite matrix.
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    /// Factorizes `m`. Returns `None` when `m` is not numerically positive
    /// definite; this is the positive-definiteness test used everywhere.
    pub fn new(m: &Mat) -> Option<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let chol = Cholesky::new(m.clone())?;
        if chol.l_dirty().diagonal().iter().any(|&d| d <= 0.0 || !d.is_finite()) {
            return None;
        }
        Some(Self { chol })
    }

    /// Natural log determinant.
    pub fn ln_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Computes `m^{-1} rhs`.
    pub fn solve(&self, rhs: &Mat) -> Mat {
        self.chol.solve(rhs)
    }

    pub fn inverse(&self) -> Mat {
        self.chol.inverse()
    }
}

/// `Tr(a * b)` without forming the product.
pub fn trace_product(a: &Mat, b: &Mat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// `Tr(a^T * b)`, the Frobenius inner product.
pub fn frobenius_inner(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn symmetry_defect(m: &Mat) -> f64 {
    (m - m.transpose()).abs().max()
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Number of eigenvalues above `rel_tol` times the largest eigenvalue.
pub fn numerical_rank(m: &Mat, rel_tol: f64) -> usize {
    let ev = sym_eigenvalues(m);
    let max = ev.iter().copied().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return 0;
    }
    ev.iter().filter(|&&e| e > rel_tol * max).count()
}

/// Block-diagonal replication `I_n ⊗ g`.
pub fn kron_identity(n: usize, g: &Mat) -> Mat {
    let (r, c) = g.shape();
    let mut out = Mat::zeros(r * n, c * n);
    for b in 0..n {
        out.view_mut((b * r, b * c), (r, c)).copy_from(g);
    }
    out
}
