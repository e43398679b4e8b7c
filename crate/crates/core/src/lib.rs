//! Batch anomaly detection in multivariate time series by searching for the interval whose
//! distribution diverges most from the rest of the series.
//!
//! The crate covers the two distribution models (kernel density estimates and Gaussians),
//! the exhaustive interval scan with non-maximum suppression, pointwise baselines, a synthetic
//! benchmark generator and detection-style evaluation.

pub mod baselines;
pub mod cli;
pub mod density;
pub mod divergence;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod pipeline;
pub mod scanner;
pub mod series;
pub mod synthesis;

pub use error::{Error, Result};
pub use series::{Detection, Interval, TimeSeries};
