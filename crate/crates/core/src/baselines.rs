//! Comparison pipelines: single-GP imputation and common-mean multi-task GP
//! imputation, each followed by functional logistic regression on the
//! completed curves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisConfig, QuadratureDesign};
use crate::error::{MagicError, Result};
use crate::flr::{fit_flr, flr_prob, LogisticCoefficients};
use crate::math::{
    conditional_gaussian, rbf_from_squared_distances, sgp_posterior, KernelParams, StableCholesky,
    TimeGrid,
};
use crate::model::{
    initial_params, run_em, AlignedSample, ClassPosterior, Grouping, MagicConfig, MStepOptions,
    Problem, RoughnessPenalty, SampleSeries,
};
use crate::optim::{bounded_quasi_newton, Bounds, QuasiNewtonOptions};
use crate::predict::Imputation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMeanChoice {
    Zero,
    /// Pointwise average of the training observations (overall mean where a
    /// grid point was never observed).
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Fit kernel hyperparameters separately for every series instead of
    /// sharing one set across the training data.
    pub sgp_per_sample: bool,
    pub sgp_prior_mean: PriorMeanChoice,
    /// Roughness penalty on the shared mean (zero: none).
    pub mtgp_roughness_weight: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            sgp_per_sample: false,
            sgp_prior_mean: PriorMeanChoice::Zero,
            mtgp_roughness_weight: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Sgp,
    Mtgp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub kind: BaselineKind,
    pub grid: TimeGrid,
    pub basis: BasisConfig,
    pub kernel: KernelParams,
    pub noise: f64,
    /// Prior mean of each series (single GP) or of the shared mean (multi-task).
    pub prior_mean: DVector<f64>,
    /// Posterior of the shared mean; multi-task only.
    pub common_mean: Option<ClassPosterior>,
    pub beta: LogisticCoefficients,
    /// Single GP only: refit hyperparameters on each series before imputing.
    pub per_sample: bool,
    /// Bounds used by per-series refits.
    pub mstep: MStepOptions,
    /// EM objective trace; multi-task only.
    pub q_history: Vec<f64>,
}

/// `Σᵢ log N(yᵢ; m[Oᵢ], K_θ[Oᵢ,Oᵢ] + σ²I)` without the 2π constant.
fn sgp_log_likelihood(
    samples: &[AlignedSample],
    mean: &DVector<f64>,
    sqdist: &DMatrix<f64>,
    kernel: &KernelParams,
    noise: f64,
) -> Result<f64> {
    let k = rbf_from_squared_distances(kernel, sqdist);
    let mut total = 0.0;
    for s in samples {
        let o = &s.observed;
        let mut a = DMatrix::from_fn(o.len(), o.len(), |i, j| k[(o[i], o[j])]);
        for i in 0..o.len() {
            a[(i, i)] += noise;
        }
        let chol = StableCholesky::new(&a)?;
        let r = DVector::from_fn(o.len(), |i, _| s.values[i] - mean[o[i]]);
        total -= 0.5 * (chol.log_det() + chol.quad_form(&r));
    }
    Ok(total)
}

fn fit_sgp_hyperparameters(
    samples: &[AlignedSample],
    mean: &DVector<f64>,
    sqdist: &DMatrix<f64>,
    start: (KernelParams, f64),
    opts: &MStepOptions,
) -> Result<(KernelParams, f64)> {
    let (klo, khi) = opts.kernel_bounds;
    let (nlo, nhi) = opts.noise_bounds;
    let bounds = Bounds::new(
        vec![klo.ln(), klo.ln(), nlo.ln()],
        vec![khi.ln(), khi.ln(), nhi.ln()],
    )?;
    let x0 = [start.0.amplitude().ln(), start.0.length_scale().ln(), start.1.ln()];
    let obj = |x: &[f64]| match KernelParams::new(x[0].exp(), x[1].exp()) {
        Ok(k) => sgp_log_likelihood(samples, mean, sqdist, &k, x[2].exp()).unwrap_or(f64::NAN),
        Err(_) => f64::NAN,
    };
    let qn = QuasiNewtonOptions {
        max_iter: opts.max_optimizer_iters,
        ..QuasiNewtonOptions::default()
    };
    let best = bounded_quasi_newton(obj, &x0, &bounds, &qn)?;
    Ok((KernelParams::new(best.x[0].exp(), best.x[1].exp())?, best.x[2].exp()))
}

fn pooled_mean(samples: &[AlignedSample], n: usize) -> DVector<f64> {
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    let mut total = 0.0;
    let mut all = 0usize;
    for s in samples {
        for (p, &i) in s.observed.iter().enumerate() {
            sum[i] += s.values[p];
            count[i] += 1;
            total += s.values[p];
            all += 1;
        }
    }
    let overall = if all > 0 { total / all as f64 } else { 0.0 };
    DVector::from_fn(n, |i, _| if count[i] > 0 { sum[i] / count[i] as f64 } else { overall })
}

fn training_labels(samples: &[SampleSeries]) -> Result<Vec<u8>> {
    samples
        .iter()
        .map(|s| {
            s.label
                .ok_or_else(|| MagicError::InvalidInput(format!("training sample {} has no label", s.id)))
        })
        .collect()
}

impl BaselineModel {
    fn design(&self) -> Result<QuadratureDesign> {
        QuadratureDesign::new(&self.grid, &self.basis)
    }

    /// Completes a series; observed values pass through with zero variance.
    pub fn impute(&self, sample: &SampleSeries) -> Result<Imputation> {
        let aligned = AlignedSample::align(sample, &self.grid)?;
        self.impute_aligned(&aligned)
    }

    fn impute_aligned(&self, s: &AlignedSample) -> Result<Imputation> {
        let sqdist = self.grid.squared_distances();
        let k_theta = |k: &KernelParams| rbf_from_squared_distances(k, &sqdist);
        match self.kind {
            BaselineKind::Sgp => {
                let (kernel, noise) = if self.per_sample && !s.observed.is_empty() {
                    fit_sgp_hyperparameters(
                        std::slice::from_ref(s),
                        &self.prior_mean,
                        &sqdist,
                        (self.kernel, self.noise),
                        &self.mstep,
                    )?
                } else {
                    (self.kernel, self.noise)
                };
                let pts = self.grid.points();
                let obs_t: Vec<f64> = s.observed.iter().map(|&i| pts[i]).collect();
                let mean_at = |t: f64| {
                    self.grid
                        .locate(t, 1e-9)
                        .map_or(0.0, |i| self.prior_mean[i])
                };
                let post = sgp_posterior(&obs_t, &s.values, pts, mean_at, &kernel, noise)?;
                let mut curve = post.mean;
                let mut variance = post.covariance.diagonal().map(|v| v.max(0.0));
                for (p, &i) in s.observed.iter().enumerate() {
                    curve[i] = s.values[p];
                    variance[i] = 0.0;
                }
                Ok(Imputation { curve, variance })
            }
            BaselineKind::Mtgp => {
                let post = self.common_mean.as_ref().ok_or_else(|| {
                    MagicError::InvalidInput("multi-task model without a shared mean".into())
                })?;
                let mut sigma = &post.covariance + k_theta(&self.kernel);
                for i in 0..sigma.nrows() {
                    sigma[(i, i)] += self.noise;
                }
                let sigma = (&sigma + sigma.transpose()) * 0.5;
                let c = conditional_gaussian(&post.mean, &sigma, &s.observed, &s.values)?;
                let variance = c.variances();
                Ok(Imputation {
                    curve: c.mean,
                    variance,
                })
            }
        }
    }

    /// Probability of class 1 and the imputation it was computed from.
    pub fn predict(&self, sample: &SampleSeries) -> Result<(f64, Imputation)> {
        let imp = self.impute(sample)?;
        let p = flr_prob(&self.beta, &self.design()?.covariate(&imp.curve)?)?;
        Ok((p, imp))
    }

    fn fit_logistic(
        mut self,
        aligned: &[AlignedSample],
        labels: &[u8],
        lambda: f64,
    ) -> Result<Self> {
        let design = self.design()?;
        let covariates = aligned
            .iter()
            .map(|s| design.covariate(&self.impute_aligned(s)?.curve))
            .collect::<Result<Vec<_>>>()?;
        self.beta = fit_flr(&covariates, labels, lambda)?;
        Ok(self)
    }
}

/// Single-GP pipeline: shared hyperparameters by summed marginal
/// likelihood, per-series posterior-mean imputation, then logistic fit.
pub fn fit_sgp(
    grid: &TimeGrid,
    train: &[SampleSeries],
    config: &MagicConfig,
    baseline: &BaselineConfig,
) -> Result<BaselineModel> {
    config.validate()?;
    let labels = training_labels(train)?;
    let basis = config.basis(grid)?;
    // Only used to reuse the data-scale initialization.
    let problem = Problem::new(
        grid,
        train,
        Grouping::Common,
        &basis,
        RoughnessPenalty::none(grid.len()),
        config.lambda,
    )?;
    let prior_mean = match baseline.sgp_prior_mean {
        PriorMeanChoice::Zero => DVector::zeros(grid.len()),
        PriorMeanChoice::Pooled => pooled_mean(&problem.samples, grid.len()),
    };
    let init = initial_params(&problem, vec![prior_mean.clone()], &config.mstep)?;
    let (kernel, noise) = fit_sgp_hyperparameters(
        &problem.samples,
        &prior_mean,
        &problem.sqdist,
        (init.kernel, init.noise),
        &config.mstep,
    )?;
    let model = BaselineModel {
        kind: BaselineKind::Sgp,
        grid: grid.clone(),
        basis,
        kernel,
        noise,
        prior_mean,
        common_mean: None,
        beta: LogisticCoefficients::zeros(config.num_basis),
        per_sample: baseline.sgp_per_sample,
        mstep: config.mstep.clone(),
        q_history: Vec::new(),
    };
    model.fit_logistic(&problem.samples, &labels, config.lambda)
}

/// Common-mean multi-task pipeline: EM with one shared mean and no label
/// term, conditional imputation, then logistic fit.
pub fn fit_mtgp(
    grid: &TimeGrid,
    train: &[SampleSeries],
    prior_mean: DVector<f64>,
    config: &MagicConfig,
    baseline: &BaselineConfig,
) -> Result<BaselineModel> {
    config.validate()?;
    let labels = training_labels(train)?;
    let basis = config.basis(grid)?;
    let penalty = if baseline.mtgp_roughness_weight > 0.0 {
        RoughnessPenalty::new(grid, baseline.mtgp_roughness_weight)?
    } else {
        RoughnessPenalty::none(grid.len())
    };
    let problem = Problem::new(grid, train, Grouping::Common, &basis, penalty, config.lambda)?;
    let init = initial_params(&problem, vec![prior_mean.clone()], &config.mstep)?;
    let state = run_em(&problem, init, config)?;
    let model = BaselineModel {
        kind: BaselineKind::Mtgp,
        grid: grid.clone(),
        basis,
        kernel: state.params.kernel,
        noise: state.params.noise,
        prior_mean,
        common_mean: state.posteriors.into_iter().next(),
        beta: LogisticCoefficients::zeros(config.num_basis),
        per_sample: false,
        mstep: config.mstep.clone(),
        q_history: state.q_history,
    };
    model.fit_logistic(&problem.samples, &labels, config.lambda)
}
