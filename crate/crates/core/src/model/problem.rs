use nalgebra::DMatrix;

use super::data::{align_all, AlignedSample, SampleSeries};
use super::penalty::RoughnessPenalty;
use crate::basis::{BasisConfig, QuadratureDesign};
use crate::error::{MagicError, Result};
use crate::math::TimeGrid;

/// How training samples are assigned to class-level means.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    /// Two means, one per label; the label likelihood enters the objective.
    ByLabel,
    /// A single shared mean; labels are ignored by the objective.
    Common,
}

/// Training data with everything that stays fixed during a fit.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: TimeGrid,
    pub sqdist: DMatrix<f64>,
    pub basis: BasisConfig,
    pub design: QuadratureDesign,
    pub penalty: RoughnessPenalty,
    pub samples: Vec<AlignedSample>,
    /// Mean-group index of each sample.
    pub groups: Vec<usize>,
    pub num_groups: usize,
    pub grouping: Grouping,
    /// Ridge weight on `β1`.
    pub lambda: f64,
}

impl Problem {
    pub fn new(
        grid: &TimeGrid,
        samples: &[SampleSeries],
        grouping: Grouping,
        basis: &BasisConfig,
        penalty: RoughnessPenalty,
        lambda: f64,
    ) -> Result<Self> {
        let aligned = align_all(samples, grid)?;
        Self::from_aligned(grid, aligned, grouping, basis, penalty, lambda)
    }

    pub fn from_aligned(
        grid: &TimeGrid,
        samples: Vec<AlignedSample>,
        grouping: Grouping,
        basis: &BasisConfig,
        penalty: RoughnessPenalty,
        lambda: f64,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(MagicError::InvalidInput("no training samples".into()));
        }
        if let Some(s) = samples.iter().find(|s| s.observed.is_empty()) {
            return Err(MagicError::InvalidInput(format!("training sample {} has no observations", s.id)));
        }
        if penalty.dim() != grid.len() {
            return Err(MagicError::Dimension {
                expected: grid.len(),
                got: penalty.dim(),
            });
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(MagicError::InvalidParameter(format!(
                "ridge penalty must be non-negative, got {lambda}"
            )));
        }
        let (groups, num_groups) = match grouping {
            Grouping::ByLabel => {
                let mut g = Vec::with_capacity(samples.len());
                for s in &samples {
                    match s.label {
                        Some(z) => g.push(usize::from(z)),
                        None => {
                            return Err(MagicError::InvalidInput(format!(
                                "training sample {} has no label",
                                s.id
                            )))
                        }
                    }
                }
                if !g.contains(&0) || !g.contains(&1) {
                    return Err(MagicError::InvalidInput(
                        "training labels contain a single class".into(),
                    ));
                }
                (g, 2)
            }
            Grouping::Common => (vec![0; samples.len()], 1),
        };
        Ok(Self {
            grid: grid.clone(),
            sqdist: grid.squared_distances(),
            basis: basis.clone(),
            design: QuadratureDesign::new(grid, basis)?,
            penalty,
            samples,
            groups,
            num_groups,
            grouping,
            lambda,
        })
    }

    pub fn uses_labels(&self) -> bool {
        self.grouping == Grouping::ByLabel
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    pub fn members(&self, group: usize) -> impl Iterator<Item = &AlignedSample> {
        self.samples
            .iter()
            .zip(&self.groups)
            .filter(move |(_, &g)| g == group)
            .map(|(s, _)| s)
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label.unwrap_or(0)).collect()
    }
}
