//! Distribution models for the points inside and outside a candidate interval.
//!
//! Both models precompute prefix structures once per series so that the densities or moments
//! for any interval are available without rescanning the data.

pub(crate) mod gaussian;
pub(crate) mod kde;

pub use gaussian::{
    build_gaussian_cumulants, global_stats, interval_stats, GaussianCumulants, GaussianStats, COVARIANCE_FLOOR,
};
pub use kde::{build_cumulative_kernel, gaussian_kernel, kde_log_densities, CumulativeKernel, DENSITY_FLOOR};
