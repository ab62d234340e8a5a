use nalgebra::{DMatrix, DVector};

use crate::error::{MagicError, Result};
use crate::math::TimeGrid;

/// Second-difference roughness penalty `R = weight · DᵀD` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RoughnessPenalty {
    pub weight: f64,
    /// `(n−2) × n` matrix of `[1, −2, 1]` stencils.
    pub d: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl RoughnessPenalty {
    pub fn new(grid: &TimeGrid, weight: f64) -> Result<Self> {
        let n = grid.len();
        if n < 3 {
            return Err(MagicError::InvalidInput(format!(
                "roughness penalty needs at least 3 grid points, got {n}"
            )));
        }
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(MagicError::InvalidParameter(format!(
                "roughness weight must be non-negative, got {weight}"
            )));
        }
        let mut d = DMatrix::zeros(n - 2, n);
        for k in 0..n - 2 {
            d[(k, k)] = 1.0;
            d[(k, k + 1)] = -2.0;
            d[(k, k + 2)] = 1.0;
        }
        let r = d.transpose() * &d * weight;
        Ok(Self { weight, d, r })
    }

    /// Zero penalty on an `n`-point grid (no stencil; works for any `n`).
    pub fn none(n: usize) -> Self {
        Self {
            weight: 0.0,
            d: DMatrix::zeros(0, n),
            r: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.r * v))
    }
}

pub fn build_roughness(grid: &TimeGrid, weight: f64) -> Result<RoughnessPenalty> {
    RoughnessPenalty::new(grid, weight)
}
