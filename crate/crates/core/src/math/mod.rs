//! Kernels, stabilized Gaussian linear algebra and single-GP conditioning.

mod gp;
mod grid;
mod kernel;
mod linalg;

pub use gp::{conditional_gaussian, sgp_posterior, Conditional, GaussianOnGrid};
pub use grid::TimeGrid;
pub use kernel::{rbf_from_squared_distances, rbf_kernel_matrix, KernelParams};
pub use linalg::{log_det, stabilized_solve, StableCholesky, JITTER_MAX, JITTER_START};
