//! Synthetic two-class data and bin-based missingness.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MagicError, Result};
use crate::math::{rbf_from_squared_distances, KernelParams, StableCholesky, TimeGrid};
use crate::model::SampleSeries;

/// Derives an independent 64-bit seed for a numbered stream (splitmix64).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub grid_start: f64,
    pub grid_end: f64,
    pub grid_points: usize,
    /// Period of the class prior means `m0(t) = sin(2πt / period)`, `m1 = −m0`.
    /// The default 4 gives `sin(πt/2)`.
    pub mean_period: f64,
    pub class_kernel: KernelParams,
    pub kernel: KernelParams,
    /// Standard deviation of the observation noise.
    pub noise_sd: f64,
    pub per_class: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            grid_start: 0.0,
            grid_end: 50.0,
            grid_points: 51,
            mean_period: 4.0,
            class_kernel: KernelParams::new(1.0, 50.0).expect("positive"),
            kernel: KernelParams::new(10.0, 100.0).expect("positive"),
            noise_sd: 0.01,
            per_class: 75,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.per_class == 0 {
            return Err(MagicError::InvalidParameter("per_class must be at least 1".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(MagicError::InvalidParameter("noise_sd must be non-negative".into()));
        }
        if !(self.mean_period > 0.0 && self.mean_period.is_finite()) {
            return Err(MagicError::InvalidParameter("mean_period must be positive".into()));
        }
        if self.grid_points < 2 {
            return Err(MagicError::InvalidParameter("grid needs at least 2 points".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.grid_start, self.grid_end, self.grid_points)
    }

    /// `m0` and `m1 = −m0` on the grid.
    pub fn prior_means(&self, grid: &TimeGrid) -> [DVector<f64>; 2] {
        let m0 = DVector::from_iterator(
            grid.len(),
            grid.points().iter().map(|&t| (2.0 * PI * t / self.mean_period).sin()),
        );
        let m1 = -&m0;
        [m0, m1]
    }
}

/// A simulated data set with its latent class means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDataset {
    pub grid: TimeGrid,
    /// Complete series; these double as imputation ground truth.
    pub samples: Vec<SampleSeries>,
    pub class_means: [DVector<f64>; 2],
    pub prior_means: [DVector<f64>; 2],
}

fn draw_gaussian(
    rng: &mut ChaCha8Rng,
    mean: &DVector<f64>,
    factor: &DMatrix<f64>,
) -> DVector<f64> {
    let eps = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + factor * eps
}

/// Draws one class mean per class, then `per_class` series around it.
pub fn generate_dataset(config: &SimConfig) -> Result<SimDataset> {
    config.validate()?;
    let grid = config.grid()?;
    let sq = grid.squared_distances();
    let n = grid.len();
    let class_factor = StableCholesky::new(&rbf_from_squared_distances(&config.class_kernel, &sq))?.l();
    let indiv_factor = StableCholesky::new(&rbf_from_squared_distances(&config.kernel, &sq))?.l();
    let prior_means = config.prior_means(&grid);
    let mut rng = rng_from(config.seed);

    let class_means = [
        draw_gaussian(&mut rng, &prior_means[0], &class_factor),
        draw_gaussian(&mut rng, &prior_means[1], &class_factor),
    ];
    let width = (config.per_class * 2).to_string().len();
    let mut samples = Vec::with_capacity(2 * config.per_class);
    for z in 0..2u8 {
        for k in 0..config.per_class {
            let dev = draw_gaussian(&mut rng, &class_means[usize::from(z)], &indiv_factor);
            let values: Vec<f64> = dev
                .iter()
                .map(|&v| v + config.noise_sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let idx = usize::from(z) * config.per_class + k;
            samples.push(SampleSeries {
                id: format!("s{idx:0width$}"),
                times: grid.points().to_vec(),
                values,
                label: Some(z),
            });
        }
    }
    debug_assert!(samples.iter().all(|s| s.len() == n));
    Ok(SimDataset {
        grid,
        samples,
        class_means,
        prior_means,
    })
}

/// Number of points kept at missing ratio `alpha`: `round((1 − α) n)`.
pub fn kept_count(n: usize, alpha: f64) -> usize {
    ((1.0 - alpha) * n as f64).round() as usize
}

/// Keeps one uniformly chosen point from each of `round((1−α)n)`
/// equal-width bins spanning the sample's time range.
pub fn apply_missingness(sample: &SampleSeries, alpha: f64, seed: u64) -> Result<SampleSeries> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(MagicError::InvalidParameter(format!(
            "missing ratio must lie in [0, 1), got {alpha}"
        )));
    }
    sample.validate()?;
    if alpha == 0.0 {
        return Ok(sample.clone());
    }
    let n = sample.len();
    let keep = kept_count(n, alpha);
    if keep == 0 {
        return Err(MagicError::InvalidParameter(format!(
            "missing ratio {alpha} keeps no points of a {n}-point series"
        )));
    }
    let lo = sample.times[0];
    let hi = sample.times[n - 1];
    let width = (hi - lo) / keep as f64;
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); keep];
    for (i, &t) in sample.times.iter().enumerate() {
        let b = if width > 0.0 {
            (((t - lo) / width).floor() as usize).min(keep - 1)
        } else {
            0
        };
        bins[b].push(i);
    }
    let mut rng = rng_from(seed);
    let mut chosen = Vec::with_capacity(keep);
    for (b, members) in bins.iter().enumerate() {
        if members.is_empty() {
            return Err(MagicError::InvalidInput(format!(
                "sample {}: bin {b} of {keep} has no observations",
                sample.id
            )));
        }
        chosen.push(members[rng.random_range(0..members.len())]);
    }
    Ok(SampleSeries {
        id: sample.id.clone(),
        times: chosen.iter().map(|&i| sample.times[i]).collect(),
        values: chosen.iter().map(|&i| sample.values[i]).collect(),
        label: sample.label,
    })
}
