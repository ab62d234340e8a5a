use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{MagicError, Result};

/// First diagonal jitter tried after a plain factorization fails.
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-4;

/// Cholesky factor of a symmetric matrix, with the jitter that made it succeed.
///
/// Jitter is relative: the value added to the diagonal is `jitter` times the
/// mean absolute diagonal entry, so the escalation behaves the same for
/// kernels with amplitude 1 and amplitude 100.
#[derive(Debug, Clone)]
pub struct StableCholesky {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl StableCholesky {
    pub fn new(matrix: &DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(MagicError::Dimension {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(MagicError::Singular { jitter: 0.0 });
        }
        if let Some(chol) = Cholesky::new(matrix.clone()) {
            return Ok(Self { chol, jitter: 0.0 });
        }
        let n = matrix.nrows();
        let scale = if n == 0 {
            1.0
        } else {
            let mean = matrix.diagonal().iter().map(|d| d.abs()).sum::<f64>() / n as f64;
            if mean > 0.0 {
                mean
            } else {
                1.0
            }
        };
        let mut jitter = JITTER_START;
        loop {
            let mut m = matrix.clone();
            for i in 0..n {
                m[(i, i)] += jitter * scale;
            }
            if let Some(chol) = Cholesky::new(m) {
                return Ok(Self { chol, jitter });
            }
            if jitter >= JITTER_MAX {
                return Err(MagicError::Singular { jitter });
            }
            jitter = (jitter * 10.0).min(JITTER_MAX);
        }
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Relative jitter that was needed (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// `L⁻¹ rhs`.
    pub fn solve_lower(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(rhs)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn solve_lower_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(rhs)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = self.chol.inverse();
        symmetrize(&inv)
    }

    /// `vᵀ A⁻¹ v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        self.solve_lower_vec(v).norm_squared()
    }
}

/// Solves `matrix · x = rhs` for symmetric `matrix`, with the jitter policy.
pub fn stabilized_solve(matrix: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if rhs.nrows() != matrix.nrows() {
        return Err(MagicError::Dimension {
            expected: matrix.nrows(),
            got: rhs.nrows(),
        });
    }
    Ok(StableCholesky::new(matrix)?.solve(rhs))
}

pub fn log_det(matrix: &DMatrix<f64>) -> Result<f64> {
    Ok(StableCholesky::new(matrix)?.log_det())
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub(crate) fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}
