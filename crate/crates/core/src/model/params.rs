use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MagicError, Result};
use crate::flr::LogisticCoefficients;
use crate::math::{rbf_from_squared_distances, KernelParams};

/// Relative nugget added to class-mean prior covariances.
///
/// Long length-scales make the bare RBF matrix numerically singular on a
/// dense grid. A fixed nugget (rather than on-demand jitter) keeps the
/// prior density a smooth function of the hyperparameters, which the
/// finite-difference M-step relies on.
pub const CLASS_NUGGET: f64 = 1e-6;

/// Lower bound for the noise variance.
pub const MIN_NOISE: f64 = 1e-8;

/// Prior covariance of a class-level mean: RBF plus the relative nugget.
pub fn class_covariance(params: &KernelParams, sqdist: &DMatrix<f64>) -> DMatrix<f64> {
    let mut k = rbf_from_squared_distances(params, sqdist);
    let nugget = CLASS_NUGGET * params.amplitude().powi(2);
    for i in 0..k.nrows() {
        k[(i, i)] += nugget;
    }
    k
}

/// The full parameter set: one kernel per mean group (two classes, or one
/// shared mean), the individual kernel, noise, logistic coefficients and
/// the fixed prior mean curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub class_kernels: Vec<KernelParams>,
    pub kernel: KernelParams,
    pub noise: f64,
    pub beta: LogisticCoefficients,
    pub prior_means: Vec<DVector<f64>>,
}

impl ModelParams {
    pub fn validate(&self, grid_len: usize) -> Result<()> {
        if self.class_kernels.is_empty() || self.class_kernels.len() != self.prior_means.len() {
            return Err(MagicError::InvalidParameter(
                "need one prior mean per class kernel".into(),
            ));
        }
        if let Some(m) = self.prior_means.iter().find(|m| m.len() != grid_len) {
            return Err(MagicError::Dimension {
                expected: grid_len,
                got: m.len(),
            });
        }
        if !(self.noise >= MIN_NOISE && self.noise.is_finite()) {
            return Err(MagicError::InvalidParameter(format!(
                "noise variance {} is below {MIN_NOISE:e}",
                self.noise
            )));
        }
        if self.beta.stacked().iter().any(|v| !v.is_finite()) {
            return Err(MagicError::InvalidParameter("non-finite β".into()));
        }
        Ok(())
    }

    pub fn num_groups(&self) -> usize {
        self.class_kernels.len()
    }
}

/// Gaussian posterior of one class-level mean on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPosterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// `log |covariance|`, computed stably during the E-step.
    pub log_det: f64,
    /// True when the class had no samples and the posterior is the prior.
    pub prior_only: bool,
}

impl ClassPosterior {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}
