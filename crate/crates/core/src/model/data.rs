use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{MagicError, Result};
use crate::math::TimeGrid;

/// Tolerance used to match observation times to grid points.
pub const GRID_TOLERANCE: f64 = 1e-9;

/// One individual's observed series and optional binary label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSeries {
    pub id: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub label: Option<u8>,
}

impl SampleSeries {
    pub fn new(
        id: impl Into<String>,
        times: Vec<f64>,
        values: Vec<f64>,
        label: Option<u8>,
    ) -> Result<Self> {
        let s = Self {
            id: id.into(),
            times,
            values,
            label,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.id;
        if self.times.len() != self.values.len() {
            return Err(MagicError::InvalidInput(format!(
                "sample {id}: {} times but {} values",
                self.times.len(),
                self.values.len()
            )));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MagicError::InvalidInput(format!(
                "sample {id}: times must be strictly increasing"
            )));
        }
        if self.times.iter().chain(&self.values).any(|v| !v.is_finite()) {
            return Err(MagicError::InvalidInput(format!(
                "sample {id}: non-finite time or value"
            )));
        }
        if let Some(z) = self.label {
            if z > 1 {
                return Err(MagicError::InvalidInput(format!(
                    "sample {id}: label {z} is not 0 or 1"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// A sample whose observation times have been mapped to grid indices.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSample {
    pub id: String,
    /// Strictly increasing grid indices of the observed points.
    pub observed: Vec<usize>,
    pub values: DVector<f64>,
    /// Complement of `observed`, in increasing order.
    pub unobserved: Vec<usize>,
    pub label: Option<u8>,
}

impl AlignedSample {
    pub fn align(sample: &SampleSeries, grid: &TimeGrid) -> Result<Self> {
        sample.validate()?;
        let mut observed = Vec::with_capacity(sample.len());
        for &t in &sample.times {
            let idx = grid.locate(t, GRID_TOLERANCE).ok_or_else(|| {
                MagicError::InvalidInput(format!(
                    "sample {}: time {t} is not on the global grid",
                    sample.id
                ))
            })?;
            observed.push(idx);
        }
        if observed.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MagicError::InvalidInput(format!(
                "sample {}: two times map to the same grid point",
                sample.id
            )));
        }
        Ok(Self::from_indices(
            sample.id.clone(),
            observed,
            DVector::from_column_slice(&sample.values),
            sample.label,
            grid.len(),
        ))
    }

    pub(crate) fn from_indices(
        id: String,
        observed: Vec<usize>,
        values: DVector<f64>,
        label: Option<u8>,
        grid_len: usize,
    ) -> Self {
        let mut mask = vec![false; grid_len];
        for &i in &observed {
            mask[i] = true;
        }
        let unobserved = (0..grid_len).filter(|&i| !mask[i]).collect();
        Self {
            id,
            observed,
            values,
            unobserved,
            label,
        }
    }

    pub fn to_series(&self, grid: &TimeGrid) -> SampleSeries {
        SampleSeries {
            id: self.id.clone(),
            times: self.observed.iter().map(|&i| grid.points()[i]).collect(),
            values: self.values.iter().copied().collect(),
            label: self.label,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.unobserved.is_empty()
    }
}

pub fn align_all(samples: &[SampleSeries], grid: &TimeGrid) -> Result<Vec<AlignedSample>> {
    samples.iter().map(|s| AlignedSample::align(s, grid)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligns_and_splits_indices() {
        let grid = TimeGrid::uniform(0.0, 5.0, 6).unwrap();
        let s = SampleSeries::new("a", vec![1.0, 3.0 + 1e-12], vec![0.5, -0.5], Some(1)).unwrap();
        let a = AlignedSample::align(&s, &grid).unwrap();
        assert_eq!(a.observed, vec![1, 3]);
        assert_eq!(a.unobserved, vec![0, 2, 4, 5]);
        assert_eq!(a.to_series(&grid).times, vec![1.0, 3.0]);
    }

    #[test]
    fn rejects_off_grid_and_bad_labels() {
        let grid = TimeGrid::uniform(0.0, 5.0, 6).unwrap();
        let s = SampleSeries::new("a", vec![1.5], vec![0.5], None).unwrap();
        assert!(AlignedSample::align(&s, &grid).is_err());
        assert!(SampleSeries::new("b", vec![1.0], vec![0.5], Some(2)).is_err());
        assert!(SampleSeries::new("c", vec![2.0, 1.0], vec![0.5, 0.1], None).is_err());
    }
}
