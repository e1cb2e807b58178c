//! Gestational-age estimation from fetal ultrasound: cohort handling,
//! preprocessing, heteroscedastic regressors, aggregation, clinical formula
//! baselines, growth percentiles and evaluation statistics.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the common instantiations.

pub mod aggregation;
pub mod cohort;
pub mod error;
pub mod estimator;
pub mod evalstats;
pub mod formulae;
pub mod growth;
pub mod imaging;
pub mod pipeline;
pub mod provenance;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Estimate64 = aggregation::Estimate<f64>;
pub type CaseEstimate64 = aggregation::CaseEstimate<f64>;
pub type Frame32 = imaging::Frame<f32>;
pub type Frame64 = imaging::Frame<f64>;
pub type Clip32 = imaging::Clip<f32>;
pub type ConvRegressor32 = estimator::ConvRegressor<f32>;
pub type ConvRegressor64 = estimator::ConvRegressor<f64>;
