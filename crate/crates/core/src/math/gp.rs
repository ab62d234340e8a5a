use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kernel::{rbf_kernel_matrix, KernelParams};
use super::linalg::{submatrix, subvector, symmetrize, StableCholesky};
use crate::error::{MagicError, Result};

/// A multivariate normal over the points of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianOnGrid {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianOnGrid {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(MagicError::Dimension {
                expected: mean.len(),
                got: covariance.nrows(),
            });
        }
        Ok(Self { mean, covariance })
    }

    pub fn empty() -> Self {
        Self {
            mean: DVector::zeros(0),
            covariance: DMatrix::zeros(0, 0),
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn variances(&self) -> DVector<f64> {
        self.covariance.diagonal()
    }
}

/// Single-GP posterior at `targets` given noisy observations.
///
/// Noise is added to the observed block only; the returned mean and
/// covariance describe the latent (noise-free) function.
pub fn sgp_posterior<F>(
    obs_times: &[f64],
    obs_values: &DVector<f64>,
    targets: &[f64],
    prior_mean: F,
    params: &KernelParams,
    noise: f64,
) -> Result<GaussianOnGrid>
where
    F: Fn(f64) -> f64,
{
    if obs_times.len() != obs_values.len() {
        return Err(MagicError::Dimension {
            expected: obs_times.len(),
            got: obs_values.len(),
        });
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(MagicError::InvalidParameter(format!(
            "noise variance must be non-negative, got {noise}"
        )));
    }
    if targets.is_empty() {
        return Ok(GaussianOnGrid::empty());
    }
    let m_star = DVector::from_iterator(targets.len(), targets.iter().map(|&t| prior_mean(t)));
    let k_ss = rbf_kernel_matrix(params, targets, targets);
    if obs_times.is_empty() {
        return GaussianOnGrid::new(m_star, k_ss);
    }
    let mut k_oo = rbf_kernel_matrix(params, obs_times, obs_times);
    for i in 0..k_oo.nrows() {
        k_oo[(i, i)] += noise;
    }
    let chol = StableCholesky::new(&k_oo)?;
    let m_obs = DVector::from_iterator(obs_times.len(), obs_times.iter().map(|&t| prior_mean(t)));
    let k_os = rbf_kernel_matrix(params, obs_times, targets);
    let alpha = chol.solve_vec(&(obs_values - m_obs));
    let mean = m_star + k_os.transpose() * alpha;
    let w = chol.solve_lower(&k_os);
    let cov = symmetrize(&(k_ss - w.transpose() * w));
    GaussianOnGrid::new(mean, cov)
}

/// Result of conditioning a grid Gaussian on some of its coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditional {
    /// Full-length mean; observed coordinates carry the conditioning values exactly.
    pub mean: DVector<f64>,
    /// Full-length covariance; rows and columns of observed coordinates are zero.
    pub covariance: DMatrix<f64>,
}

impl Conditional {
    pub fn variances(&self) -> DVector<f64> {
        self.covariance.diagonal().map(|v| v.max(0.0))
    }
}

/// Conditions `N(mean, cov)` on `x[observed] = values`.
pub fn conditional_gaussian(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    observed: &[usize],
    values: &DVector<f64>,
) -> Result<Conditional> {
    let n = mean.len();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(MagicError::Dimension {
            expected: n,
            got: cov.nrows(),
        });
    }
    if observed.len() != values.len() {
        return Err(MagicError::Dimension {
            expected: observed.len(),
            got: values.len(),
        });
    }
    let mut is_obs = vec![false; n];
    for &i in observed {
        if i >= n || is_obs[i] {
            return Err(MagicError::InvalidInput(format!(
                "observed index {i} is out of range or repeated"
            )));
        }
        is_obs[i] = true;
    }
    let unobserved: Vec<usize> = (0..n).filter(|&i| !is_obs[i]).collect();

    let mut out_mean = mean.clone();
    let mut out_cov = DMatrix::zeros(n, n);
    for (k, &i) in observed.iter().enumerate() {
        out_mean[i] = values[k];
    }
    if unobserved.is_empty() {
        return Ok(Conditional {
            mean: out_mean,
            covariance: out_cov,
        });
    }
    let c_uu = submatrix(cov, &unobserved, &unobserved);
    let (mu_u, sigma_u) = if observed.is_empty() {
        (subvector(mean, &unobserved), c_uu)
    } else {
        let chol = StableCholesky::new(&submatrix(cov, observed, observed))?;
        let c_ou = submatrix(cov, observed, &unobserved);
        let resid = values - subvector(mean, observed);
        let mu = subvector(mean, &unobserved) + c_ou.transpose() * chol.solve_vec(&resid);
        let w = chol.solve_lower(&c_ou);
        (mu, symmetrize(&(c_uu - w.transpose() * w)))
    };
    for (a, &i) in unobserved.iter().enumerate() {
        out_mean[i] = mu_u[a];
        for (b, &j) in unobserved.iter().enumerate() {
            out_cov[(i, j)] = sigma_u[(a, b)];
        }
    }
    Ok(Conditional {
        mean: out_mean,
        covariance: out_cov,
    })
}
