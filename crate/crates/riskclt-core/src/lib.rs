//! Estimation of nested (composite) risk functionals from i.i.d. samples.
//!
//! A composite risk functional is a nested expectation
//!
//! ```text
//! rho(X) = E[ f1( E[ f2( ... E[ f_{k+1}(X) ] ..., X) ], X) ]
//! ```
//!
//! covering mean–semideviation, Average Value-at-Risk, and higher-moment
//! coherent risk measures. This crate provides:
//!
//! * plug-in estimators that replace every nested expectation with the
//!   empirical mean of the same sample,
//! * their limiting standard deviations via the delta method (a linear
//!   functional of the Gaussian limit of the empirical stage means),
//! * deterministic minimization for risk measures defined through an
//!   auxiliary optimization variable,
//! * population oracles by numerical integration for Normal and Student t
//!   data, and
//! * a Monte Carlo harness that replays many estimation runs and measures
//!   how close the estimator's law is to its Normal limit.
//!
//! All numeric code is generic over the [`scalar::Scalar`] type; the
//! aliases at the crate root fix the default double-precision API.

pub mod asymptotics;
pub mod distributions;
pub mod error;
pub mod functional;
pub mod linalg;
pub mod measures;
pub mod optimize;
pub mod quad;
pub mod report;
pub mod sample;
pub mod scalar;
pub mod simulate;
pub mod special;
pub mod sum;

pub use error::{Result, RiskError};
pub use sample::{Provenance, SampleSet};
pub use scalar::Scalar;

/// Double-precision sample.
pub type SampleSetF64 = SampleSet<f64>;
