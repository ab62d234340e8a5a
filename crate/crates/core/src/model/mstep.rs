use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::moments::{label_likelihood, Completed, TaylorMoments};
use super::objective::{group_prior_term, q_function, sample_terms};
use super::params::{ClassPosterior, ModelParams, MIN_NOISE};
use super::problem::Problem;
use crate::error::Result;
use crate::flr::LogisticCoefficients;
use crate::math::{rbf_from_squared_distances, KernelParams};
use crate::optim::{bounded_quasi_newton, Bounds, QuasiNewtonOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MStepOptions {
    /// Box for every RBF amplitude and length-scale.
    pub kernel_bounds: (f64, f64),
    /// Box for the noise variance.
    pub noise_bounds: (f64, f64),
    pub max_optimizer_iters: usize,
}

impl Default for MStepOptions {
    fn default() -> Self {
        Self {
            kernel_bounds: (1e-3, 1e4),
            noise_bounds: (MIN_NOISE, 1e2),
            max_optimizer_iters: 200,
        }
    }
}

impl MStepOptions {
    fn optimizer(&self) -> QuasiNewtonOptions {
        QuasiNewtonOptions {
            max_iter: self.max_optimizer_iters,
            ..QuasiNewtonOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    ClassKernel(usize),
    Beta,
    Kernel,
}

/// What happened to one block update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockOutcome {
    pub block: Block,
    pub accepted: bool,
    pub objective_before: f64,
    pub objective_after: f64,
    pub warning: Option<String>,
}

fn log_box(lo: f64, hi: f64, dims: usize) -> Bounds {
    Bounds {
        lower: vec![lo.ln(); dims],
        upper: vec![hi.ln(); dims],
    }
}

fn kernel_from_log(x: &[f64]) -> Option<KernelParams> {
    KernelParams::new(x[0].exp(), x[1].exp()).ok()
}

/// Per-sample quantities that make the β objective cheap:
/// `U = β0 + β1ᵀ x̄` and `V = β1ᵀ Γ β1`.
struct BetaDesign {
    xbar: Vec<DVector<f64>>,
    gram: Vec<DMatrix<f64>>,
    labels: Vec<u8>,
}

impl BetaDesign {
    fn new(problem: &Problem, params: &ModelParams, posteriors: &[ClassPosterior]) -> Result<Self> {
        let k_theta = rbf_from_squared_distances(&params.kernel, &problem.sqdist);
        let weighted = &problem.design.weighted;
        let mut xbar = Vec::with_capacity(problem.samples.len());
        let mut gram = Vec::with_capacity(problem.samples.len());
        for (s, &g) in problem.samples.iter().zip(&problem.groups) {
            let post = &posteriors[g];
            let done = Completed::new(s, post, &k_theta, params.noise)?;
            let proj = done.projection(s, weighted);
            xbar.push(weighted.transpose() * &done.curve);
            let gm = proj.transpose() * &post.covariance * &proj;
            gram.push((&gm + gm.transpose()) * 0.5);
        }
        Ok(Self {
            xbar,
            gram,
            labels: problem.labels(),
        })
    }

    fn objective(&self, beta: &[f64], lambda: f64) -> f64 {
        let b1 = DVector::from_column_slice(&beta[1..]);
        let mut total = -0.5 * lambda * b1.norm_squared();
        for ((x, g), &z) in self.xbar.iter().zip(&self.gram).zip(&self.labels) {
            let m = TaylorMoments {
                u: beta[0] + b1.dot(x),
                v: b1.dot(&(g * &b1)).max(0.0),
            };
            total += label_likelihood(m, z);
        }
        total
    }
}

fn free_energy(problem: &Problem, params: &ModelParams, posteriors: &[ClassPosterior]) -> Result<f64> {
    Ok(q_function(problem, params, posteriors)?.free_energy())
}

/// One pass over the parameter blocks: each class kernel, then β (when
/// labels are used), then the shared kernel and noise. A block's new value
/// is kept only if the full objective does not decrease.
pub fn m_step(
    problem: &Problem,
    params: &ModelParams,
    posteriors: &[ClassPosterior],
    opts: &MStepOptions,
) -> Result<(ModelParams, Vec<BlockOutcome>)> {
    let mut current = params.clone();
    let mut value = free_energy(problem, &current, posteriors)?;
    let mut outcomes = Vec::new();
    let qn = opts.optimizer();
    let (klo, khi) = opts.kernel_bounds;

    let mut blocks: Vec<Block> = (0..problem.num_groups).map(Block::ClassKernel).collect();
    if problem.uses_labels() {
        blocks.push(Block::Beta);
    }
    blocks.push(Block::Kernel);

    for block in blocks {
        let proposal: std::result::Result<ModelParams, String> = match block {
            Block::ClassKernel(g) => {
                let post = &posteriors[g];
                let m = &current.prior_means[g];
                let k0 = current.class_kernels[g];
                let x0 = [k0.amplitude().ln(), k0.length_scale().ln()];
                let obj = |x: &[f64]| match kernel_from_log(x) {
                    Some(k) => group_prior_term(&k, &problem.sqdist, m, post).unwrap_or(f64::NAN),
                    None => f64::NAN,
                };
                bounded_quasi_newton(obj, &x0, &log_box(klo, khi, 2), &qn)
                    .map_err(|e| e.to_string())
                    .and_then(|r| kernel_from_log(&r.x).ok_or_else(|| "invalid kernel".into()))
                    .map(|k| {
                        let mut p = current.clone();
                        p.class_kernels[g] = k;
                        p
                    })
            }
            Block::Beta => BetaDesign::new(problem, &current, posteriors)
                .map_err(|e| e.to_string())
                .and_then(|design| {
                    let x0: Vec<f64> = current.beta.stacked().iter().copied().collect();
                    let dims = x0.len();
                    bounded_quasi_newton(
                        |b: &[f64]| design.objective(b, problem.lambda),
                        &x0,
                        &Bounds::unbounded(dims),
                        &qn,
                    )
                    .map_err(|e| e.to_string())
                })
                .and_then(|r| {
                    LogisticCoefficients::from_stacked(&DVector::from_vec(r.x))
                        .map_err(|e| e.to_string())
                })
                .map(|beta| {
                    let mut p = current.clone();
                    p.beta = beta;
                    p
                }),
            Block::Kernel => {
                let k0 = current.kernel;
                let x0 = [k0.amplitude().ln(), k0.length_scale().ln(), current.noise.ln()];
                let mut bounds = log_box(klo, khi, 3);
                bounds.lower[2] = opts.noise_bounds.0.ln();
                bounds.upper[2] = opts.noise_bounds.1.ln();
                let beta = current.beta.clone();
                let obj = |x: &[f64]| {
                    let Some(k) = kernel_from_log(x) else {
                        return f64::NAN;
                    };
                    match sample_terms(problem, &k, x[2].exp(), &beta, posteriors) {
                        Ok((series, label)) => series + label,
                        Err(_) => f64::NAN,
                    }
                };
                bounded_quasi_newton(obj, &x0, &bounds, &qn)
                    .map_err(|e| e.to_string())
                    .and_then(|r| {
                        kernel_from_log(&r.x)
                            .map(|k| (k, r.x[2].exp().max(MIN_NOISE)))
                            .ok_or_else(|| "invalid kernel".into())
                    })
                    .map(|(k, noise)| {
                        let mut p = current.clone();
                        p.kernel = k;
                        p.noise = noise;
                        p
                    })
            }
        };

        let outcome = match proposal {
            Ok(candidate) => match free_energy(problem, &candidate, posteriors) {
                Ok(v) if v >= value => {
                    current = candidate;
                    let before = value;
                    value = v;
                    BlockOutcome {
                        block,
                        accepted: true,
                        objective_before: before,
                        objective_after: v,
                        warning: None,
                    }
                }
                Ok(v) => BlockOutcome {
                    block,
                    accepted: false,
                    objective_before: value,
                    objective_after: value,
                    warning: (v.is_nan()).then(|| "objective undefined at proposal".to_string()),
                },
                Err(e) => BlockOutcome {
                    block,
                    accepted: false,
                    objective_before: value,
                    objective_after: value,
                    warning: Some(e.to_string()),
                },
            },
            Err(msg) => BlockOutcome {
                block,
                accepted: false,
                objective_before: value,
                objective_after: value,
                warning: Some(msg),
            },
        };
        outcomes.push(outcome);
    }
    Ok((current, outcomes))
}
