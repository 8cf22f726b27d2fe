//! Robust multivariate outlier detection for high-dimensional data.
//!
//! The main detector ([`detector::detect`]) works in a robustly sphered
//! principal-component space and remains usable when there are more columns
//! than rows. Classical Mahalanobis, OGK and spatial-sign detectors live in
//! [`baselines`] for comparison, and [`evalsim`] provides the contamination
//! simulations, error-rate bookkeeping and timing used to compare them.
//! [`cli`] is the library half of the `prcmpout` binary.

// negated float comparisons throughout the crate reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod chi2;
pub mod cli;
pub mod data;
pub mod detector;
pub mod error;
pub mod evalsim;
pub mod robust;
pub mod spectral;

pub use data::DataMatrix;
pub use detector::{detect, DetectorConfig, WeightReport};
pub use error::{Error, Result};
