//! Penalized functional logistic regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::FunctionalCovariate;
use crate::error::{MagicError, Result};
use crate::math::StableCholesky;

const GRAD_TOL: f64 = 1e-6;
const MAX_NEWTON: usize = 200;

/// `β = [β0, β1ᵀ]ᵀ`; only `β1` is penalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticCoefficients {
    pub intercept: f64,
    pub weights: DVector<f64>,
}

impl LogisticCoefficients {
    pub fn zeros(num_basis: usize) -> Self {
        Self {
            intercept: 0.0,
            weights: DVector::zeros(num_basis),
        }
    }

    /// Splits a stacked `[β0, β1…]` vector.
    pub fn from_stacked(v: &DVector<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(MagicError::Dimension { expected: 1, got: 0 });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(MagicError::InvalidParameter("non-finite logistic coefficient".into()));
        }
        Ok(Self {
            intercept: v[0],
            weights: v.rows(1, v.len() - 1).into_owned(),
        })
    }

    pub fn stacked(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.weights.len() + 1);
        v[0] = self.intercept;
        v.rows_mut(1, self.weights.len()).copy_from(&self.weights);
        v
    }

    pub fn num_basis(&self) -> usize {
        self.weights.len()
    }

    pub fn linear_predictor(&self, x: &FunctionalCovariate) -> Result<f64> {
        let xv = x.as_vector();
        if xv.len() != self.weights.len() + 1 {
            return Err(MagicError::Dimension {
                expected: self.weights.len() + 1,
                got: xv.len(),
            });
        }
        Ok(self.intercept + self.weights.dot(&xv.rows(1, self.weights.len())))
    }
}

/// Logistic function, never overflowing.
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^η)` without overflow.
pub fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

pub fn flr_prob(beta: &LogisticCoefficients, x: &FunctionalCovariate) -> Result<f64> {
    Ok(sigmoid(beta.linear_predictor(x)?))
}

/// `Σ [z xᵀβ − log(1 + e^{xᵀβ})] − (λ/2)‖β1‖²`.
pub fn penalized_log_likelihood(
    beta: &DVector<f64>,
    design: &DMatrix<f64>,
    labels: &[u8],
    lambda: f64,
) -> f64 {
    let eta = design * beta;
    let ll: f64 = eta
        .iter()
        .zip(labels)
        .map(|(&e, &z)| f64::from(z) * e - softplus(e))
        .sum();
    let ridge = beta.rows(1, beta.len() - 1).norm_squared();
    ll - 0.5 * lambda * ridge
}

pub(crate) fn validate_labels(labels: &[u8]) -> Result<()> {
    if let Some(bad) = labels.iter().find(|&&z| z > 1) {
        return Err(MagicError::InvalidInput(format!("label {bad} is not 0 or 1")));
    }
    let ones = labels.iter().filter(|&&z| z == 1).count();
    if ones == 0 || ones == labels.len() {
        return Err(MagicError::DegenerateLabels);
    }
    Ok(())
}

pub(crate) fn stack_design(covariates: &[FunctionalCovariate]) -> Result<DMatrix<f64>> {
    let p = covariates
        .first()
        .map(FunctionalCovariate::len)
        .ok_or_else(|| MagicError::InvalidInput("no covariates".into()))?;
    let mut x = DMatrix::zeros(covariates.len(), p);
    for (i, c) in covariates.iter().enumerate() {
        if c.len() != p {
            return Err(MagicError::Dimension {
                expected: p,
                got: c.len(),
            });
        }
        x.row_mut(i).copy_from(&c.as_vector().transpose());
    }
    Ok(x)
}

/// Penalized maximum likelihood by damped Newton iterations.
///
/// The objective is strictly concave for `λ > 0`, so Newton with step
/// halving converges to the unique maximizer; it stops when the gradient
/// ∞-norm drops to 1e-6.
pub fn fit_flr(
    covariates: &[FunctionalCovariate],
    labels: &[u8],
    lambda: f64,
) -> Result<LogisticCoefficients> {
    if covariates.len() != labels.len() {
        return Err(MagicError::Dimension {
            expected: covariates.len(),
            got: labels.len(),
        });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(MagicError::InvalidParameter(format!(
            "ridge penalty must be non-negative, got {lambda}"
        )));
    }
    validate_labels(labels)?;
    let x = stack_design(covariates)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(MagicError::InvalidInput("non-finite functional covariate".into()));
    }
    let p = x.ncols();
    let z = DVector::from_iterator(labels.len(), labels.iter().map(|&v| f64::from(v)));

    let mut beta = DVector::zeros(p);
    let n1 = z.sum();
    beta[0] = (n1 / (z.len() as f64 - n1)).ln();
    let mut value = penalized_log_likelihood(&beta, &x, labels, lambda);

    for _ in 0..MAX_NEWTON {
        let eta = &x * &beta;
        let prob = eta.map(sigmoid);
        let mut grad = x.transpose() * (&z - &prob);
        for j in 1..p {
            grad[j] -= lambda * beta[j];
        }
        if grad.amax() <= GRAD_TOL {
            return LogisticCoefficients::from_stacked(&beta);
        }
        let w = prob.map(|q| q * (1.0 - q));
        let xw = DMatrix::from_fn(x.nrows(), p, |i, j| x[(i, j)] * w[i]);
        let mut info = x.transpose() * xw;
        for j in 1..p {
            info[(j, j)] += lambda;
        }
        let step = StableCholesky::new(&info)?.solve_vec(&grad);
        // Newton decrement: predicted gain of a full step. Below roundoff of
        // the objective the gradient tolerance may be unreachable.
        if 0.5 * grad.dot(&step) <= 1e-13 * (1.0 + value.abs()) {
            return LogisticCoefficients::from_stacked(&beta);
        }

        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let cand = &beta + &step * t;
            let v = penalized_log_likelihood(&cand, &x, labels, lambda);
            if v.is_finite() && v >= value {
                beta = cand;
                value = v;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            // No ascent along the Newton direction: already at the numerical optimum.
            return LogisticCoefficients::from_stacked(&beta);
        }
    }
    Err(MagicError::Optimizer(format!(
        "logistic regression did not converge in {MAX_NEWTON} Newton steps (separable data with λ = {lambda}?)"
    )))
}
