//! Estimation of the location, scatter and degrees of freedom of the
//! multivariate t distribution by maximum likelihood (EM) and by maximum
//! Lq-likelihood (a doubly reweighted EM-type algorithm), plus a seeded
//! simulation harness for outlier-contamination studies.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the simulation harness and
//! the command-line tool use.

// `!(x > 0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod linalg;
pub mod root;
pub mod scalar;
pub mod simulation;
pub mod special;
pub mod tdist;

pub use error::{Error, Result};
pub use estimators::{fit, FitConfig, FitResult, Method, ScatterCentering};
pub use scalar::Real;
pub use tdist::{Dataset, MvtParams};

pub type Matrix64 = linalg::Matrix<f64>;
pub type SpdMatrix64 = linalg::SpdMatrix<f64>;
pub type MvtParams64 = tdist::MvtParams<f64>;
pub type Dataset64 = tdist::Dataset<f64>;
pub type FitConfig64 = estimators::FitConfig<f64>;
pub type FitResult64 = estimators::FitResult<f64>;

pub type MvtParams32 = tdist::MvtParams<f32>;
pub type Dataset32 = tdist::Dataset<f32>;
pub type FitConfig32 = estimators::FitConfig<f32>;
