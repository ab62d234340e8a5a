//! Joint imputation and classification of sparse, time-misaligned series.
//!
//! Every series is modelled as a class-level Gaussian-process mean plus an
//! individual Gaussian-process deviation plus white noise. A functional
//! logistic regression on the completed curve links the series to a binary
//! label. The parameters are estimated with an EM algorithm whose M-step
//! cycles through four parameter blocks.
//!
//! Module map:
//!
//! - [`math`]: RBF kernels, jittered Cholesky solves, single-GP conditioning
//! - [`basis`], [`flr`]: cubic B-splines, quadrature and penalized logistic fits
//! - [`optim`]: bounded limited-memory quasi-Newton maximizer
//! - [`model`]: the hierarchical model and its EM fit
//! - [`predict`]: MAP classification, class-conditional imputation, probabilities
//! - [`baselines`]: single-GP and common-mean multi-task GP pipelines
//! - [`sim`], [`metrics`], [`eval`]: simulation, AUC/MSE and evaluation harnesses
//! - [`io`]: CSV ingestion, run configuration, checkpoints and reports
//!
//! The `examples/` directory of this crate walks through each capability.

pub mod basis;
pub mod baselines;
pub mod error;
pub mod eval;
pub mod flr;
pub mod io;
pub mod math;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod predict;
pub mod sim;

pub use error::{MagicError, Result};
