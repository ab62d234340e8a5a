use nalgebra::{DMatrix, DVector};

use super::params::{class_covariance, ClassPosterior, ModelParams};
use super::problem::Problem;
use crate::error::Result;
use crate::math::{rbf_from_squared_distances, StableCholesky};

/// Sub-block `A = K_θ[O,O] + σ² I` of one sample's observation covariance.
pub(crate) fn observation_factor(
    k_theta: &DMatrix<f64>,
    observed: &[usize],
    noise: f64,
) -> Result<StableCholesky> {
    let n = observed.len();
    let a = DMatrix::from_fn(n, n, |i, j| {
        k_theta[(observed[i], observed[j])] + if i == j { noise } else { 0.0 }
    });
    StableCholesky::new(&a)
}

/// Gaussian posterior with prior `N(m, K)` and extra precision `P`, linear term `b`:
/// covariance `(K⁻¹ + P)⁻¹`, mean `covariance · (K⁻¹ m + b)`.
///
/// Evaluated as `K̃ = L S⁻¹ Lᵀ` with `K = LLᵀ`, `S = I + LᵀPL`, which never
/// inverts `K` itself.
pub(crate) fn gaussian_update(
    prior_cov: &DMatrix<f64>,
    prior_mean: &DVector<f64>,
    precision: &DMatrix<f64>,
    linear: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    let n = prior_mean.len();
    let lk = StableCholesky::new(prior_cov)?;
    let l = lk.l();
    let s = DMatrix::identity(n, n) + l.transpose() * precision * &l;
    let ms = StableCholesky::new(&s)?;
    // F = L M⁻ᵀ, so FFᵀ = L S⁻¹ Lᵀ.
    let f = ms.solve_lower(&l.transpose()).transpose();
    let cov = &f * f.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    let mean = prior_mean + &cov * (linear - precision * prior_mean);
    let log_det = lk.log_det() - ms.log_det();
    Ok((mean, cov, log_det))
}

/// Posterior of every class-level mean given the current parameters.
///
/// Each sample contributes its observed sub-block: precision
/// `Sᵢᵀ Aᵢ⁻¹ Sᵢ` and linear term `Sᵢᵀ Aᵢ⁻¹ yᵢ`, where `Sᵢ` selects the
/// observed grid points. For complete samples this is exactly
/// `(K_θ + σ²I)⁻¹` per sample.
pub fn e_step(problem: &Problem, params: &ModelParams) -> Result<Vec<ClassPosterior>> {
    params.validate(problem.grid_len())?;
    let n = problem.grid_len();
    let k_theta = rbf_from_squared_distances(&params.kernel, &problem.sqdist);
    let mut out = Vec::with_capacity(problem.num_groups);
    for g in 0..problem.num_groups {
        let mut precision = problem.penalty.r.clone();
        let mut linear = DVector::zeros(n);
        let mut count = 0usize;
        for s in problem.members(g) {
            count += 1;
            let chol = observation_factor(&k_theta, &s.observed, params.noise)?;
            let a_inv = chol.inverse();
            let a_inv_y = chol.solve_vec(&s.values);
            for (p, &i) in s.observed.iter().enumerate() {
                linear[i] += a_inv_y[p];
                for (q, &j) in s.observed.iter().enumerate() {
                    precision[(i, j)] += a_inv[(p, q)];
                }
            }
        }
        let prior_cov = class_covariance(&params.class_kernels[g], &problem.sqdist);
        let prior_mean = &params.prior_means[g];
        let (mean, covariance, log_det) =
            gaussian_update(&prior_cov, prior_mean, &precision, &linear)?;
        // An empty class keeps its prior mean; only the penalty shapes its covariance.
        let (mean, prior_only) = if count == 0 {
            (prior_mean.clone(), true)
        } else {
            (mean, false)
        };
        out.push(ClassPosterior {
            mean,
            covariance,
            log_det,
            prior_only,
        });
    }
    Ok(out)
}
