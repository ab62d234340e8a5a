use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::estep::observation_factor;
use super::moments::{label_likelihood, Completed, TaylorMoments};
use super::params::{class_covariance, ClassPosterior, ModelParams};
use super::problem::Problem;
use crate::error::{MagicError, Result};
use crate::flr::LogisticCoefficients;
use crate::math::{rbf_from_squared_distances, KernelParams, StableCholesky};

/// Expected complete-data log-likelihood, split by term (constants dropped).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QBreakdown {
    /// `Σ ℒᵢ`, the Taylor-approximated label log-likelihood.
    pub label: f64,
    /// Expected series log-likelihood given the class means.
    pub series: f64,
    /// Expected log prior density of the class means.
    pub prior: f64,
    /// `(λ/2) ‖β1‖²`.
    pub ridge: f64,
    /// `½ Σ E[μᵀRμ]`.
    pub roughness: f64,
    /// `½ Σ log |K̃|`, the posterior entropy up to a constant.
    pub entropy: f64,
}

impl QBreakdown {
    /// The Q-function: label + series + prior terms.
    pub fn q(&self) -> f64 {
        self.label + self.series + self.prior
    }

    /// The objective EM keeps monotone: Q minus both penalties, plus the
    /// posterior entropy. Its maximizer over the class-mean posteriors is
    /// the penalized E-step, so blockwise ascent applies to every step.
    pub fn free_energy(&self) -> f64 {
        self.q() - self.ridge - self.roughness + self.entropy
    }
}

/// `tr(L⁻¹ M L⁻ᵀ) = tr(A⁻¹ M)` for `A = LLᵀ`, symmetric `M`.
fn trace_solve(chol: &StableCholesky, m: &DMatrix<f64>) -> f64 {
    let x = chol.solve_lower(m);
    chol.solve_lower(&x.transpose()).trace()
}

/// `−½ [log|K_g| + tr(K_g⁻¹ K̃_g) + (m̃_g − m_g)ᵀ K_g⁻¹ (m̃_g − m_g)]`.
pub fn group_prior_term(
    kernel: &KernelParams,
    sqdist: &DMatrix<f64>,
    prior_mean: &DVector<f64>,
    post: &ClassPosterior,
) -> Result<f64> {
    let chol = StableCholesky::new(&class_covariance(kernel, sqdist))?;
    let diff = &post.mean - prior_mean;
    Ok(-0.5 * (chol.log_det() + trace_solve(&chol, &post.covariance) + chol.quad_form(&diff)))
}

/// Series and label terms summed over samples.
pub(crate) fn sample_terms(
    problem: &Problem,
    kernel: &KernelParams,
    noise: f64,
    beta: &LogisticCoefficients,
    posteriors: &[ClassPosterior],
) -> Result<(f64, f64)> {
    let k_theta = rbf_from_squared_distances(kernel, &problem.sqdist);
    let w = &problem.design.weighted * &beta.weights;
    let mut series = 0.0;
    let mut label = 0.0;
    for (s, &g) in problem.samples.iter().zip(&problem.groups) {
        let post = &posteriors[g];
        let o = &s.observed;
        let chol = observation_factor(&k_theta, o, noise)?;
        let k_oo = DMatrix::from_fn(o.len(), o.len(), |i, j| post.covariance[(o[i], o[j])]);
        let resid = DVector::from_fn(o.len(), |i, _| s.values[i] - post.mean[o[i]]);
        series -=
            0.5 * (chol.log_det() + trace_solve(&chol, &k_oo) + chol.quad_form(&resid));
        if problem.uses_labels() {
            let z = s.label.ok_or_else(|| {
                MagicError::InvalidInput(format!("training sample {} has no label", s.id))
            })?;
            let done = Completed::new(s, post, &k_theta, noise)?;
            let a = done.sensitivity(s, &w);
            let m = TaylorMoments {
                u: beta.intercept + w.dot(&done.curve),
                v: a.dot(&(&post.covariance * &a)).max(0.0),
            };
            label += label_likelihood(m, z);
        }
    }
    Ok((series, label))
}

pub fn q_function(
    problem: &Problem,
    params: &ModelParams,
    posteriors: &[ClassPosterior],
) -> Result<QBreakdown> {
    if posteriors.len() != problem.num_groups || params.num_groups() != problem.num_groups {
        return Err(MagicError::Dimension {
            expected: problem.num_groups,
            got: posteriors.len(),
        });
    }
    let (series, label) = sample_terms(
        problem,
        &params.kernel,
        params.noise,
        &params.beta,
        posteriors,
    )?;
    let mut prior = 0.0;
    let mut roughness = 0.0;
    let mut entropy = 0.0;
    let r = &problem.penalty.r;
    for (g, post) in posteriors.iter().enumerate() {
        prior += group_prior_term(
            &params.class_kernels[g],
            &problem.sqdist,
            &params.prior_means[g],
            post,
        )?;
        roughness += 0.5 * (post.mean.dot(&(r * &post.mean)) + (r * &post.covariance).trace());
        entropy += 0.5 * post.log_det;
    }
    let ridge = if problem.uses_labels() {
        0.5 * problem.lambda * params.beta.weights.norm_squared()
    } else {
        0.0
    };
    Ok(QBreakdown {
        label,
        series,
        prior,
        ridge,
        roughness,
        entropy,
    })
}
