//! MAP classification, class-conditional imputation and probabilities for
//! new series under a fitted model.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::QuadratureDesign;
use crate::error::{MagicError, Result};
use crate::flr::flr_prob;
use crate::math::{conditional_gaussian, rbf_from_squared_distances, StableCholesky};
use crate::model::{AlignedSample, FittedModel, SampleSeries};

/// Class probabilities before seeing a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct ClassPrior {
    p0: f64,
    p1: f64,
}

impl ClassPrior {
    pub fn new(p0: f64, p1: f64) -> Result<Self> {
        if !(p0 >= 0.0 && p1 >= 0.0 && ((p0 + p1) - 1.0).abs() <= 1e-12) {
            return Err(MagicError::InvalidParameter(format!(
                "class priors ({p0}, {p1}) must be non-negative and sum to 1"
            )));
        }
        Ok(Self { p0, p1 })
    }

    /// Training-set class fractions.
    pub fn from_counts(n0: usize, n1: usize) -> Result<Self> {
        let n = n0 + n1;
        if n == 0 {
            return Err(MagicError::InvalidInput("no samples to count".into()));
        }
        let p1 = n1 as f64 / n as f64;
        Self::new(1.0 - p1, p1)
    }

    pub fn get(&self, z: u8) -> f64 {
        if z == 0 {
            self.p0
        } else {
            self.p1
        }
    }
}

impl TryFrom<[f64; 2]> for ClassPrior {
    type Error = MagicError;

    fn try_from(p: [f64; 2]) -> Result<Self> {
        Self::new(p[0], p[1])
    }
}

impl From<ClassPrior> for [f64; 2] {
    fn from(p: ClassPrior) -> Self {
        [p.p0, p.p1]
    }
}

/// A completed curve with per-point variance (zero at observed points).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputation {
    pub curve: DVector<f64>,
    pub variance: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub id: String,
    pub class: u8,
    /// `log p(y | z) + log p(z)` for z = 0, 1.
    pub map_log_scores: [f64; 2],
    /// Logistic probability of class 1 from the MAP-class imputation.
    pub probability: f64,
    pub imputation: Imputation,
    /// Set when the series had no observations and the prior decided.
    pub prior_only: bool,
}

/// Precomputed predictive covariances `K̃_z + K_θ + σ²I` for a model.
#[derive(Debug, Clone)]
pub struct Predictor<'a> {
    model: &'a FittedModel,
    design: QuadratureDesign,
    sigma: Vec<DMatrix<f64>>,
}

impl<'a> Predictor<'a> {
    pub fn new(model: &'a FittedModel) -> Result<Self> {
        let n = model.grid.len();
        if model.posteriors.len() != 2 {
            return Err(MagicError::InvalidInput(format!(
                "a classifier needs two class posteriors, found {}",
                model.posteriors.len()
            )));
        }
        let k_theta = rbf_from_squared_distances(&model.params.kernel, &model.grid.squared_distances());
        let sigma = model
            .posteriors
            .iter()
            .map(|p| {
                let mut s = &p.covariance + &k_theta;
                for i in 0..n {
                    s[(i, i)] += model.params.noise;
                }
                (&s + s.transpose()) * 0.5
            })
            .collect();
        Ok(Self {
            model,
            design: QuadratureDesign::new(&model.grid, &model.basis)?,
            sigma,
        })
    }

    pub fn model(&self) -> &FittedModel {
        self.model
    }

    fn align(&self, new: &SampleSeries) -> Result<AlignedSample> {
        AlignedSample::align(new, &self.model.grid)
    }

    /// `log N(y; m̃_z[O], Σ̃_z[O,O])`; zero for a series with no observations.
    pub fn class_marginal(&self, new: &SampleSeries, z: u8) -> Result<f64> {
        let s = self.align(new)?;
        self.marginal_aligned(&s, z)
    }

    fn marginal_aligned(&self, s: &AlignedSample, z: u8) -> Result<f64> {
        let zi = usize::from(z.min(1));
        let o = &s.observed;
        if o.is_empty() {
            return Ok(0.0);
        }
        let sig = &self.sigma[zi];
        let mean = &self.model.posteriors[zi].mean;
        let cov = DMatrix::from_fn(o.len(), o.len(), |i, j| sig[(o[i], o[j])]);
        let resid = DVector::from_fn(o.len(), |i, _| s.values[i] - mean[o[i]]);
        let chol = StableCholesky::new(&cov)?;
        Ok(-0.5 * (o.len() as f64 * (2.0 * PI).ln() + chol.log_det() + chol.quad_form(&resid)))
    }

    fn scores_aligned(&self, s: &AlignedSample) -> Result<[f64; 2]> {
        let prior = self.model.class_prior;
        let mut out = [0.0; 2];
        for z in 0..2u8 {
            out[usize::from(z)] = self.marginal_aligned(s, z)? + prior.get(z).ln();
        }
        Ok(out)
    }

    /// Class maximizing marginal likelihood plus log prior; ties go to class 0.
    pub fn map_classify(&self, new: &SampleSeries) -> Result<u8> {
        let s = self.align(new)?;
        let sc = self.scores_aligned(&s)?;
        Ok(u8::from(sc[1] > sc[0]))
    }

    /// Conditional of `N(m̃_z, Σ̃_z)` given the observed entries.
    pub fn impute_new(&self, new: &SampleSeries, z: u8) -> Result<Imputation> {
        let s = self.align(new)?;
        self.impute_aligned(&s, z)
    }

    fn impute_aligned(&self, s: &AlignedSample, z: u8) -> Result<Imputation> {
        let zi = usize::from(z.min(1));
        let c = conditional_gaussian(
            &self.model.posteriors[zi].mean,
            &self.sigma[zi],
            &s.observed,
            &s.values,
        )?;
        let variance = c.variances();
        Ok(Imputation {
            curve: c.mean,
            variance,
        })
    }

    /// Logistic probability of class 1 for a complete curve.
    pub fn predict_prob(&self, curve: &DVector<f64>) -> Result<f64> {
        flr_prob(&self.model.params.beta, &self.design.covariate(curve)?)
    }

    /// MAP class, that class's imputation, and the probability from it.
    pub fn predict(&self, new: &SampleSeries) -> Result<PredictionResult> {
        let s = self.align(new)?;
        let scores = self.scores_aligned(&s)?;
        let class = u8::from(scores[1] > scores[0]);
        let imputation = self.impute_aligned(&s, class)?;
        let probability = self.predict_prob(&imputation.curve)?;
        Ok(PredictionResult {
            id: new.id.clone(),
            class,
            map_log_scores: scores,
            probability,
            imputation,
            prior_only: s.observed.is_empty(),
        })
    }
}

pub fn class_marginal(new: &SampleSeries, z: u8, model: &FittedModel) -> Result<f64> {
    Predictor::new(model)?.class_marginal(new, z)
}

pub fn map_classify(new: &SampleSeries, model: &FittedModel) -> Result<u8> {
    Predictor::new(model)?.map_classify(new)
}

pub fn impute_new(new: &SampleSeries, z: u8, model: &FittedModel) -> Result<Imputation> {
    Predictor::new(model)?.impute_new(new, z)
}

pub fn predict_prob(model: &FittedModel, curve: &DVector<f64>) -> Result<f64> {
    Predictor::new(model)?.predict_prob(curve)
}

/// Arithmetic mean of per-feature probabilities.
pub fn meta_combine(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(MagicError::InvalidInput("no probabilities to combine".into()));
    }
    Ok(probs.iter().sum::<f64>() / probs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisConfig;
    use crate::flr::LogisticCoefficients;
    use crate::math::{KernelParams, TimeGrid};
    use crate::model::{ClassPosterior, ModelParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(rng: &mut ChaCha8Rng, n: usize) -> FittedModel {
        let grid = TimeGrid::uniform(0.0, (n - 1) as f64, n).unwrap();
        let post = |rng: &mut ChaCha8Rng| {
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
            ClassPosterior {
                mean: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
                covariance: &a * a.transpose(),
                log_det: 0.0,
                prior_only: false,
            }
        };
        let kernel = KernelParams::new(rng.random_range(0.5..2.0), rng.random_range(0.5..3.0)).unwrap();
        FittedModel {
            basis: BasisConfig::for_grid(4, &grid).unwrap(),
            params: ModelParams {
                class_kernels: vec![kernel; 2],
                kernel,
                noise: rng.random_range(0.1..1.0),
                beta: LogisticCoefficients {
                    intercept: 0.3,
                    weights: DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0)),
                },
                prior_means: vec![DVector::zeros(n); 2],
            },
            posteriors: vec![post(rng), post(rng)],
            class_prior: ClassPrior::new(0.4, 0.6).unwrap(),
            q_history: vec![],
            iterations: 0,
            converged: true,
            grid,
        }
    }

    fn dense_sigma(m: &FittedModel, z: usize) -> DMatrix<f64> {
        let n = m.grid.len();
        let pts = m.grid.points();
        let k = &m.params.kernel;
        DMatrix::from_fn(n, n, |i, j| {
            let d = pts[i] - pts[j];
            m.posteriors[z].covariance[(i, j)]
                + k.amplitude().powi(2) * (-d * d / (2.0 * k.length_scale().powi(2))).exp()
                + if i == j { m.params.noise } else { 0.0 }
        })
    }

    #[test]
    fn marginal_and_imputation_match_dense_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let n = rng.random_range(3..8);
            let model = random_model(&mut rng, n);
            let obs: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
            let y: Vec<f64> = obs.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
            let times = obs.iter().map(|&i| i as f64).collect();
            let s = SampleSeries::new("x", times, y.clone(), None).unwrap();
            let pred = Predictor::new(&model).unwrap();
            for z in 0..2u8 {
                let zi = usize::from(z);
                let sig = dense_sigma(&model, zi);
                let so = DMatrix::from_fn(obs.len(), obs.len(), |i, j| sig[(obs[i], obs[j])]);
                let r = DVector::from_fn(obs.len(), |i, _| y[i] - model.posteriors[zi].mean[obs[i]]);
                let expected = if obs.is_empty() {
                    0.0
                } else {
                    let inv = so.clone().try_inverse().unwrap();
                    -0.5 * (obs.len() as f64 * (2.0 * PI).ln() + so.determinant().ln() + r.dot(&(inv * &r)))
                };
                let got = pred.class_marginal(&s, z).unwrap();
                assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");

                let imp = pred.impute_new(&s, z).unwrap();
                for i in 0..n {
                    let (m, v) = if let Some(p) = obs.iter().position(|&o| o == i) {
                        (y[p], 0.0)
                    } else if obs.is_empty() {
                        (model.posteriors[zi].mean[i], sig[(i, i)])
                    } else {
                        let inv = so.clone().try_inverse().unwrap();
                        let c = DVector::from_fn(obs.len(), |p, _| sig[(i, obs[p])]);
                        (model.posteriors[zi].mean[i] + c.dot(&(&inv * &r)), sig[(i, i)] - c.dot(&(&inv * &c)))
                    };
                    assert!((imp.curve[i] - m).abs() < 1e-10);
                    assert!((imp.variance[i] - v).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn prediction_follows_the_map_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = random_model(&mut rng, 6);
        let s = SampleSeries::new("x", vec![1.0, 4.0], vec![0.5, -0.5], None).unwrap();
        let pred = Predictor::new(&model).unwrap();
        let r = pred.predict(&s).unwrap();
        let sc = [
            pred.class_marginal(&s, 0).unwrap() + 0.4f64.ln(),
            pred.class_marginal(&s, 1).unwrap() + 0.6f64.ln(),
        ];
        assert_eq!(r.map_log_scores, sc);
        assert_eq!(r.class, u8::from(sc[1] > sc[0]));
        assert_eq!(r.imputation, pred.impute_new(&s, r.class).unwrap());
        assert_eq!(r.probability, pred.predict_prob(&r.imputation.curve).unwrap());
        assert!(!r.prior_only);
    }

    #[test]
    fn empty_series_is_decided_by_the_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut model = random_model(&mut rng, 5);
        let s = SampleSeries::new("e", vec![], vec![], None).unwrap();
        let r = Predictor::new(&model).unwrap().predict(&s).unwrap();
        assert!(r.prior_only);
        assert_eq!(r.class, 1);
        assert_eq!(r.imputation.curve, model.posteriors[1].mean);
        // Equal priors and no data: a tie, resolved to class 0.
        model.class_prior = ClassPrior::new(0.5, 0.5).unwrap();
        assert_eq!(map_classify(&s, &model).unwrap(), 0);
    }

    #[test]
    fn meta_combine_averages() {
        assert_eq!(meta_combine(&[0.2, 0.4, 0.9]).unwrap(), 0.5);
        assert_eq!(meta_combine(&[0.7]).unwrap(), 0.7);
        assert!(meta_combine(&[]).is_err());
    }

    #[test]
    fn class_prior_validation() {
        assert!(ClassPrior::new(0.3, 0.8).is_err());
        assert!(ClassPrior::new(-0.1, 1.1).is_err());
        let p = ClassPrior::from_counts(3, 1).unwrap();
        assert_eq!((p.get(0), p.get(1)), (0.75, 0.25));
        assert!(ClassPrior::from_counts(0, 0).is_err());
    }
}
