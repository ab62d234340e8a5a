use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::data::SampleSeries;
use super::estep::e_step;
use super::mstep::{m_step, BlockOutcome, MStepOptions};
use super::objective::{q_function, QBreakdown};
use super::params::{ClassPosterior, ModelParams};
use super::penalty::RoughnessPenalty;
use super::problem::{Grouping, Problem};
use crate::basis::BasisConfig;
use crate::error::{MagicError, Result};
use crate::flr::LogisticCoefficients;
use crate::math::{KernelParams, TimeGrid};
use crate::predict::ClassPrior;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MagicConfig {
    /// Number of cubic B-spline basis functions.
    pub num_basis: usize,
    /// Interior knots; open uniform over the grid when absent. Must number
    /// `num_basis − 4`.
    pub interior_knots: Option<Vec<f64>>,
    /// Ridge weight on `β1`.
    pub lambda: f64,
    /// Weight of the second-difference penalty on the class means.
    pub roughness_weight: f64,
    /// Relative per-block parameter change that ends the EM loop.
    pub tolerance: f64,
    pub max_iters: usize,
    pub mstep: MStepOptions,
    /// Keep a snapshot of parameters and posteriors after every iteration.
    #[serde(skip)]
    pub record_trace: bool,
}

impl Default for MagicConfig {
    fn default() -> Self {
        Self {
            num_basis: 8,
            interior_knots: None,
            lambda: 1.0,
            roughness_weight: 1.0,
            tolerance: 1e-4,
            max_iters: 100,
            mstep: MStepOptions::default(),
            record_trace: false,
        }
    }
}

impl MagicConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MagicError::InvalidParameter(msg));
        if self.num_basis < 4 {
            return bad(format!("num_basis must be at least 4, got {}", self.num_basis));
        }
        if let Some(k) = &self.interior_knots {
            if k.len() + 4 != self.num_basis {
                return bad(format!(
                    "{} interior knots give {} basis functions, but num_basis is {}",
                    k.len(),
                    k.len() + 4,
                    self.num_basis
                ));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.roughness_weight >= 0.0 && self.roughness_weight.is_finite()) {
            return bad(format!(
                "roughness_weight must be non-negative, got {}",
                self.roughness_weight
            ));
        }
        if !(self.tolerance > 0.0) {
            return bad(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        let (lo, hi) = self.mstep.kernel_bounds;
        if !(lo > 0.0 && hi > lo) {
            return bad(format!("kernel bounds ({lo}, {hi}) are invalid"));
        }
        let (lo, hi) = self.mstep.noise_bounds;
        if !(lo >= super::params::MIN_NOISE && hi > lo) {
            return bad(format!("noise bounds ({lo}, {hi}) are invalid"));
        }
        Ok(())
    }

    /// Cubic basis over the grid's span.
    pub fn basis(&self, grid: &TimeGrid) -> Result<BasisConfig> {
        match &self.interior_knots {
            None => BasisConfig::for_grid(self.num_basis, grid),
            Some(inner) => {
                let mut knots = vec![grid.start(); 4];
                knots.extend_from_slice(inner);
                knots.extend([grid.end(); 4]);
                BasisConfig::from_knots(knots)
            }
        }
    }

    /// Roughness penalty for a grid; a zero weight needs no stencil.
    pub fn penalty(&self, grid: &TimeGrid) -> Result<RoughnessPenalty> {
        if self.roughness_weight == 0.0 {
            Ok(RoughnessPenalty::none(grid.len()))
        } else {
            RoughnessPenalty::new(grid, self.roughness_weight)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmSnapshot {
    pub params: ModelParams,
    pub posteriors: Vec<ClassPosterior>,
    pub free_energy: f64,
}

/// Outer-loop state and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmState {
    pub params: ModelParams,
    pub posteriors: Vec<ClassPosterior>,
    /// Monotone objective after initialization and after every iteration.
    pub q_history: Vec<f64>,
    /// Q-function breakdown at the same points.
    pub q_terms: Vec<QBreakdown>,
    pub iterations: usize,
    pub converged: bool,
    /// Iterations whose E-step result was discarded because it lowered the objective.
    pub estep_rejections: usize,
    pub blocks: Vec<Vec<BlockOutcome>>,
    pub warnings: Vec<String>,
    pub trace: Vec<EmSnapshot>,
}

/// Data-scale starting point: amplitude = pooled sample sd, length-scale
/// = 0.3·|T|, noise = 0.1·variance, β = 0.
pub fn initial_params(
    problem: &Problem,
    prior_means: Vec<DVector<f64>>,
    opts: &MStepOptions,
) -> Result<ModelParams> {
    let values: Vec<f64> = problem
        .samples
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let (klo, khi) = opts.kernel_bounds;
    let amp = if var > 0.0 { var.sqrt() } else { 1.0 }.clamp(klo, khi);
    let span = problem.grid.span();
    let ls = if span > 0.0 { 0.3 * span } else { 1.0 }.clamp(klo, khi);
    let noise = (0.1 * var).clamp(opts.noise_bounds.0, opts.noise_bounds.1);
    let kernel = KernelParams::new(amp, ls)?;
    let params = ModelParams {
        class_kernels: vec![kernel; problem.num_groups],
        kernel,
        noise,
        beta: LogisticCoefficients::zeros(problem.design.num_basis()),
        prior_means,
    };
    params.validate(problem.grid_len())?;
    Ok(params)
}

fn rel_change(old: &[f64], new: &[f64]) -> f64 {
    let diff: f64 = old.iter().zip(new).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = old
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt()
        .max(new.iter().map(|b| b * b).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Largest relative change over the parameter blocks.
fn max_block_change(old: &ModelParams, new: &ModelParams) -> f64 {
    let kp = |k: &KernelParams| [k.amplitude(), k.length_scale()];
    let mut worst = 0.0f64;
    for (a, b) in old.class_kernels.iter().zip(&new.class_kernels) {
        worst = worst.max(rel_change(&kp(a), &kp(b)));
    }
    let ob = old.beta.stacked();
    let nb = new.beta.stacked();
    worst = worst.max(rel_change(ob.as_slice(), nb.as_slice()));
    let a = [old.kernel.amplitude(), old.kernel.length_scale(), old.noise];
    let b = [new.kernel.amplitude(), new.kernel.length_scale(), new.noise];
    worst.max(rel_change(&a, &b))
}

/// Runs EM from `init` until the parameters settle or the iteration cap.
///
/// The tracked objective never decreases: M-step blocks and the E-step
/// refresh are each kept only if they do not lower it.
pub fn run_em(problem: &Problem, init: ModelParams, config: &MagicConfig) -> Result<EmState> {
    config.validate()?;
    let mut params = init;
    params.validate(problem.grid_len())?;
    let mut posteriors = e_step(problem, &params)?;
    let terms = q_function(problem, &params, &posteriors)?;
    let mut value = terms.free_energy();
    if !value.is_finite() {
        return Err(MagicError::Fit("objective is not finite at the initial parameters".into()));
    }
    let mut state = EmState {
        params: params.clone(),
        posteriors: posteriors.clone(),
        q_history: vec![value],
        q_terms: vec![terms],
        iterations: 0,
        converged: false,
        estep_rejections: 0,
        blocks: Vec::new(),
        warnings: Vec::new(),
        trace: Vec::new(),
    };
    if config.record_trace {
        state.trace.push(EmSnapshot {
            params: params.clone(),
            posteriors: posteriors.clone(),
            free_energy: value,
        });
    }

    for it in 1..=config.max_iters {
        let (next, outcomes) = m_step(problem, &params, &posteriors, &config.mstep)?;
        for o in &outcomes {
            if let Some(w) = &o.warning {
                state.warnings.push(format!("iteration {it}, {:?}: {w}", o.block));
            }
        }
        state.blocks.push(outcomes);
        let mut terms = q_function(problem, &next, &posteriors)?;
        value = terms.free_energy();
        match e_step(problem, &next) {
            Ok(candidate) => {
                let cand_terms = q_function(problem, &next, &candidate)?;
                if cand_terms.free_energy() >= value {
                    posteriors = candidate;
                    terms = cand_terms;
                    value = terms.free_energy();
                } else {
                    state.estep_rejections += 1;
                }
            }
            Err(e) => state.warnings.push(format!("iteration {it}, E-step: {e}")),
        }
        let change = max_block_change(&params, &next);
        params = next;
        state.q_history.push(value);
        state.q_terms.push(terms);
        state.iterations = it;
        if config.record_trace {
            state.trace.push(EmSnapshot {
                params: params.clone(),
                posteriors: posteriors.clone(),
                free_energy: value,
            });
        }
        if change < config.tolerance {
            state.converged = true;
            break;
        }
    }
    state.params = params;
    state.posteriors = posteriors;
    Ok(state)
}

/// A fitted classifier: everything prediction needs, and nothing else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub grid: TimeGrid,
    pub basis: BasisConfig,
    pub params: ModelParams,
    pub posteriors: Vec<ClassPosterior>,
    pub class_prior: ClassPrior,
    pub q_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct MagicFit {
    pub model: FittedModel,
    pub state: EmState,
}

/// Prior means for real data: the zero function for both classes.
pub fn zero_prior_means(grid: &TimeGrid) -> [DVector<f64>; 2] {
    [DVector::zeros(grid.len()), DVector::zeros(grid.len())]
}

/// Fits the two-class model to labelled training series.
pub fn fit(
    grid: &TimeGrid,
    samples: &[SampleSeries],
    prior_means: [DVector<f64>; 2],
    config: &MagicConfig,
) -> Result<MagicFit> {
    config.validate()?;
    let basis = config.basis(grid)?;
    let problem = Problem::new(
        grid,
        samples,
        Grouping::ByLabel,
        &basis,
        config.penalty(grid)?,
        config.lambda,
    )?;
    let init = initial_params(&problem, prior_means.to_vec(), &config.mstep)?;
    let state = run_em(&problem, init, config)?;
    let n1 = problem.groups.iter().filter(|&&g| g == 1).count();
    let class_prior = ClassPrior::from_counts(problem.samples.len() - n1, n1)?;
    let model = FittedModel {
        grid: grid.clone(),
        basis,
        params: state.params.clone(),
        posteriors: state.posteriors.clone(),
        class_prior,
        q_history: state.q_history.clone(),
        iterations: state.iterations,
        converged: state.converged,
    };
    Ok(MagicFit { model, state })
}
