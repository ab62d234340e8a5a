//! The hierarchical model: class-level GP means, individual GP deviations,
//! a functional logistic link, and the EM fit.

mod data;
mod em;
mod estep;
mod moments;
mod mstep;
mod objective;
mod params;
mod penalty;
mod problem;

pub use data::{align_all, AlignedSample, SampleSeries, GRID_TOLERANCE};
pub use em::{
    fit, initial_params, run_em, zero_prior_means, EmSnapshot, EmState, FittedModel, MagicConfig,
    MagicFit,
};
pub use estep::e_step;
pub use moments::{
    compute_moments, label_likelihood, taylor_label_term, variance_by_double_integral,
    TaylorMoments,
};
pub use mstep::{m_step, Block, BlockOutcome, MStepOptions};
pub use objective::{group_prior_term, q_function, QBreakdown};
pub use params::{class_covariance, ClassPosterior, ModelParams, CLASS_NUGGET, MIN_NOISE};
pub use penalty::{build_roughness, RoughnessPenalty};
pub use problem::{Grouping, Problem};
