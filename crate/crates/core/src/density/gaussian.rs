use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::series::{Interval, TimeSeries};

/// Absolute diagonal loading added to every covariance estimate.
pub const COVARIANCE_FLOOR: f64 = 1e-8;

/// Prefix sums of `x_t` and `x_t x_t^T` with a leading zero row.
#[derive(Debug, Clone)]
pub struct GaussianCumulants {
    sum1: Vec<f64>,
    sum2: Vec<f64>,
    center: Vec<f64>,
    len: usize,
    dim: usize,
}

/// Mean and (regularized) covariance of a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub count: usize,
}

impl GaussianStats {
    /// Applies `S + (regularization * mean(diag S) + COVARIANCE_FLOOR) * I` to a raw estimate.
    pub fn regularized(mean: DVector<f64>, raw_cov: DMatrix<f64>, count: usize, regularization: f64) -> Self {
        let dim = raw_cov.nrows();
        let mean_diag = raw_cov.diagonal().sum() / dim as f64;
        let lambda = regularization * mean_diag.max(0.0) + COVARIANCE_FLOOR;
        let mut cov = raw_cov;
        for i in 0..dim {
            cov[(i, i)] += lambda;
        }
        Self { mean, cov, count }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Prefix sums of `x - c` and `(x - c)(x - c)^T`, where `c` is the column mean of the series.
///
/// Centering keeps the moment differences well conditioned when the data sit far from zero.
pub fn build_gaussian_cumulants(series: &TimeSeries) -> GaussianCumulants {
    let n = series.len();
    let d = series.dim();
    let mut center = vec![0.0; d];
    for x in series.rows() {
        for (c, v) in center.iter_mut().zip(x) {
            *c += v;
        }
    }
    for c in center.iter_mut() {
        *c /= n.max(1) as f64;
    }
    let mut sum1 = vec![0.0; (n + 1) * d];
    let mut sum2 = vec![0.0; (n + 1) * d * d];
    let mut x = vec![0.0; d];
    for (t, row) in series.rows().enumerate() {
        for ((xi, v), c) in x.iter_mut().zip(row).zip(&center) {
            *xi = v - c;
        }
        let (prev1, next1) = sum1.split_at_mut((t + 1) * d);
        let prev1 = &prev1[t * d..];
        for i in 0..d {
            next1[i] = prev1[i] + x[i];
        }
        let (prev2, next2) = sum2.split_at_mut((t + 1) * d * d);
        let prev2 = &prev2[t * d * d..];
        for i in 0..d {
            for j in 0..d {
                next2[i * d + j] = prev2[i * d + j] + x[i] * x[j];
            }
        }
    }
    GaussianCumulants {
        sum1,
        sum2,
        center,
        len: n,
        dim: d,
    }
}

impl GaussianCumulants {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Column means subtracted before accumulating.
    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// Row `p` of the centered first-moment prefix sums (sum over `t < p`).
    pub fn sum1(&self, p: usize) -> &[f64] {
        &self.sum1[p * self.dim..(p + 1) * self.dim]
    }

    /// Slice `p` of the centered second-moment prefix sums, row-major `D x D`.
    pub fn sum2(&self, p: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.sum2[p * dd..(p + 1) * dd]
    }

    /// Raw mean and covariance over `[start, end)` or, with `complement`, over the rest.
    pub(crate) fn raw_moments(&self, interval: Interval, complement: bool) -> (DVector<f64>, DMatrix<f64>, usize) {
        let d = self.dim;
        let (s, e) = (interval.start, interval.end);
        let (a1, b1, t1) = (self.sum1(s), self.sum1(e), self.sum1(self.len));
        let (a2, b2, t2) = (self.sum2(s), self.sum2(e), self.sum2(self.len));
        let count = if complement {
            self.len - interval.len()
        } else {
            interval.len()
        };
        let m = count as f64;
        // complement sums are prefix(start) + (total - prefix(end))
        let first = |i: usize| {
            if complement {
                a1[i] + (t1[i] - b1[i])
            } else {
                b1[i] - a1[i]
            }
        };
        let second = |k: usize| {
            if complement {
                a2[k] + (t2[k] - b2[k])
            } else {
                b2[k] - a2[k]
            }
        };
        let shifted = DVector::from_fn(d, |i, _| first(i) / m);
        let mut cov = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let c = second(i * d + j) / m - shifted[i] * shifted[j];
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
        }
        let mean = DVector::from_fn(d, |i, _| shifted[i] + self.center[i]);
        (mean, cov, count)
    }
}

/// Regularized Gaussian statistics for the points inside `interval` and for its complement.
pub fn interval_stats(
    gc: &GaussianCumulants,
    interval: Interval,
    regularization: f64,
) -> Result<(GaussianStats, GaussianStats)> {
    interval.check_within(gc.len)?;
    if interval.len() >= gc.len {
        return Err(Error::invalid(format!(
            "interval [{}, {}) leaves no points outside it (n = {})",
            interval.start, interval.end, gc.len
        )));
    }
    Ok(interval_stats_unchecked(gc, interval, regularization))
}

pub(crate) fn interval_stats_unchecked(
    gc: &GaussianCumulants,
    interval: Interval,
    regularization: f64,
) -> (GaussianStats, GaussianStats) {
    let (mi, si, ci) = gc.raw_moments(interval, false);
    let (mo, so, co) = gc.raw_moments(interval, true);
    (
        GaussianStats::regularized(mi, si, ci, regularization),
        GaussianStats::regularized(mo, so, co, regularization),
    )
}

/// Regularized mean and covariance of the whole series.
pub fn global_stats(gc: &GaussianCumulants, regularization: f64) -> GaussianStats {
    let d = gc.dim;
    let m = gc.len as f64;
    let total1 = gc.sum1(gc.len);
    let total2 = gc.sum2(gc.len);
    let shifted = DVector::from_fn(d, |i, _| total1[i] / m);
    let cov = DMatrix::from_fn(d, d, |i, j| {
        let (i, j) = (i.min(j), i.max(j));
        total2[i * d + j] / m - shifted[i] * shifted[j]
    });
    let mean = DVector::from_fn(d, |i, _| shifted[i] + gc.center[i]);
    GaussianStats::regularized(mean, cov, gc.len, regularization)
}
