use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MagicError, Result};

/// The global time domain: a strictly increasing list of finite time stamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(MagicError::InvalidInput("time grid is empty".into()));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(MagicError::InvalidInput("time grid has non-finite points".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MagicError::InvalidInput(
                "time grid must be strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    /// `n` equally spaced points from `start` to `end` inclusive.
    pub fn uniform(start: f64, end: f64, n: usize) -> Result<Self> {
        match n {
            0 => Err(MagicError::InvalidInput("time grid is empty".into())),
            1 => Self::new(vec![start]),
            _ => {
                let step = (end - start) / (n - 1) as f64;
                let mut points: Vec<f64> = (0..n).map(|i| start + step * i as f64).collect();
                points[n - 1] = end;
                Self::new(points)
            }
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn span(&self) -> f64 {
        self.end() - self.start()
    }

    /// Index of the grid point within `tol` of `t`, if any.
    pub fn locate(&self, t: f64, tol: f64) -> Option<usize> {
        let pos = self.points.partition_point(|&p| p < t);
        let mut best: Option<(usize, f64)> = None;
        for i in [pos.wrapping_sub(1), pos] {
            if let Some(&p) = self.points.get(i) {
                let d = (p - t).abs();
                if d <= tol && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn squared_distances(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| {
            let d = self.points[i] - self.points[j];
            d * d
        })
    }

    /// Trapezoid weights: `sum_j w_j f(t_j)` approximates the integral of `f`.
    pub fn trapezoid_weights(&self) -> Result<Vec<f64>> {
        let n = self.len();
        if n < 2 {
            return Err(MagicError::Quadrature(n));
        }
        let mut w = vec![0.0; n];
        for j in 0..n - 1 {
            let h = self.points[j + 1] - self.points[j];
            w[j] += 0.5 * h;
            w[j + 1] += 0.5 * h;
        }
        Ok(w)
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = MagicError;

    fn try_from(points: Vec<f64>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(grid: TimeGrid) -> Self {
        grid.points
    }
}
