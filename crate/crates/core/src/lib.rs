//! Regression learners, missing-covariate imputation and forest-based
//! prediction intervals, together with a Monte-Carlo harness that relates
//! imputation accuracy (NRMSE) to post-imputation prediction accuracy
//! (cross-validated MSE) and to interval coverage.
//!
//! The pipeline for one Monte-Carlo iterate is
//! generate or load data → [`amputation`] → [`imputation`] →
//! [`learners`] / [`intervals`] → [`metrics`]; [`harness`] wires it together.

pub mod amputation;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod imputation;
pub mod intervals;
pub mod learners;
pub mod metrics;
pub mod synthgen;

pub use dataset::{DataMatrix, FoldAssignment, Matrix, MissMask};
pub use error::{Error, Result};
pub use harness::seed::derive_seed;
