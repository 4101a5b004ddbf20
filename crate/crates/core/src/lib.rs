//! Robust effect size index (RESI) estimation for linear, generalized linear
//! and nonlinear regression models.

pub mod bootstrap;
pub mod convert;
pub mod covariance;
pub mod datasets;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod fit;
pub mod formula;
pub mod inference;
pub mod pipeline;
pub mod report;

mod linalg;

pub use error::{ResiError, Result};
