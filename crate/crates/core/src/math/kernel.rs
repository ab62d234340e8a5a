use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MagicError, Result};

/// RBF hyperparameters: amplitude and length-scale, both strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelParams", into = "RawKernelParams")]
pub struct KernelParams {
    amplitude: f64,
    length_scale: f64,
}

#[derive(Serialize, Deserialize)]
struct RawKernelParams {
    amplitude: f64,
    length_scale: f64,
}

impl KernelParams {
    pub fn new(amplitude: f64, length_scale: f64) -> Result<Self> {
        let valid = |v: f64| v.is_finite() && v > 0.0;
        if !valid(amplitude) || !valid(length_scale) {
            return Err(MagicError::InvalidParameter(format!(
                "kernel hyperparameters must be positive (amplitude {amplitude}, length-scale {length_scale})"
            )));
        }
        Ok(Self {
            amplitude,
            length_scale,
        })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    /// Covariance at squared time difference `d2`.
    #[inline]
    pub fn eval_squared(&self, d2: f64) -> f64 {
        let l2 = self.length_scale * self.length_scale;
        self.amplitude * self.amplitude * (-d2 / (2.0 * l2)).exp()
    }
}

impl TryFrom<RawKernelParams> for KernelParams {
    type Error = MagicError;

    fn try_from(raw: RawKernelParams) -> Result<Self> {
        Self::new(raw.amplitude, raw.length_scale)
    }
}

impl From<KernelParams> for RawKernelParams {
    fn from(p: KernelParams) -> Self {
        Self {
            amplitude: p.amplitude,
            length_scale: p.length_scale,
        }
    }
}

/// Cross-covariance matrix `k(a_i, b_j) = amp^2 exp(-(a_i - b_j)^2 / (2 l^2))`.
pub fn rbf_kernel_matrix(params: &KernelParams, times_a: &[f64], times_b: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(times_a.len(), times_b.len(), |i, j| {
        let d = times_a[i] - times_b[j];
        params.eval_squared(d * d)
    })
}

/// Same kernel evaluated from a precomputed matrix of squared distances.
pub fn rbf_from_squared_distances(params: &KernelParams, sq: &DMatrix<f64>) -> DMatrix<f64> {
    sq.map(|d2| params.eval_squared(d2))
}
