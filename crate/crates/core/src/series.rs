//! Time series, intervals and the preprocessing applied before scoring.
//!
//! All indices are 0-based and intervals are half-open `[start, end)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `n x D` real-valued series stored row-major (one row per time step).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    len: usize,
    dim: usize,
    timestamps: Option<Vec<String>>,
}

impl TimeSeries {
    /// Builds a series from row-major values. Every entry must be finite.
    pub fn new(values: Vec<f64>, len: usize, dim: usize) -> Result<Self> {
        if len == 0 || dim == 0 {
            return Err(Error::invalid(format!(
                "time series must have at least one row and one column (got {len}x{dim})"
            )));
        }
        if values.len() != len * dim {
            return Err(Error::invalid(format!(
                "expected {} values for a {len}x{dim} series, got {}",
                len * dim,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self {
            values,
            len,
            dim,
            timestamps: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::invalid(format!(
                "row {i} has {} columns, expected {dim}",
                rows[i].len()
            )));
        }
        Self::new(rows.concat(), rows.len(), dim)
    }

    /// Univariate convenience constructor.
    pub fn from_column(column: &[f64]) -> Result<Self> {
        Self::new(column.to_vec(), column.len(), 1)
    }

    /// Attaches time labels. They must have one entry per row and be strictly increasing
    /// (numerically if every label parses as a number, lexically otherwise).
    pub fn with_timestamps(mut self, timestamps: Vec<String>) -> Result<Self> {
        if timestamps.len() != self.len {
            return Err(Error::invalid(format!(
                "{} timestamps for a series of length {}",
                timestamps.len(),
                self.len
            )));
        }
        let numeric: Option<Vec<f64>> = timestamps.iter().map(|s| s.trim().parse().ok()).collect();
        let increasing = match numeric {
            Some(nums) => nums.windows(2).all(|w| w[0] < w[1]),
            None => timestamps.windows(2).all(|w| w[0] < w[1]),
        };
        if !increasing {
            return Err(Error::invalid("timestamps are not strictly increasing"));
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn get(&self, t: usize, d: usize) -> f64 {
        self.values[t * self.dim + d]
    }

    pub fn column(&self, d: usize) -> Vec<f64> {
        self.rows().map(|r| r[d]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Overwrites column `d` in place.
    pub(crate) fn set_column(&mut self, d: usize, column: &[f64]) {
        debug_assert_eq!(column.len(), self.len);
        for (t, &v) in column.iter().enumerate() {
            self.values[t * self.dim + d] = v;
        }
    }
}

/// Half-open index range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if end <= start {
            return Err(Error::invalid(format!(
                "interval [{start}, {end}) is empty or reversed"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, t: usize) -> bool {
        self.start <= t && t < self.end
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn intersection_len(&self, other: &Interval) -> usize {
        self.end.min(other.end).saturating_sub(self.start.max(other.start))
    }

    /// Checks that the interval fits a series of length `n`.
    pub fn check_within(&self, n: usize) -> Result<()> {
        if self.is_empty() || self.end > n {
            return Err(Error::invalid(format!(
                "interval [{}, {}) is not valid for a series of length {n}",
                self.start, self.end
            )));
        }
        Ok(())
    }
}

/// A scored interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub interval: Interval,
    pub score: f64,
}

impl Detection {
    pub fn new(interval: Interval, score: f64) -> Self {
        Self { interval, score }
    }
}

/// Scales each column to zero mean and unit population standard deviation.
/// Constant columns become all zeros.
pub fn standardize(series: &TimeSeries) -> TimeSeries {
    let n = series.len() as f64;
    let dim = series.dim();
    let mut mean = vec![0.0; dim];
    for row in series.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut var = vec![0.0; dim];
    for row in series.rows() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std: Vec<f64> = var.iter().map(|s| (s / n).sqrt()).collect();

    let values = series
        .rows()
        .flat_map(|row| {
            row.iter()
                .zip(&mean)
                .zip(&std)
                .map(|((v, m), s)| if *s > 0.0 { (v - m) / s } else { 0.0 })
                .collect::<Vec<_>>()
        })
        .collect();
    TimeSeries {
        values,
        len: series.len,
        dim,
        timestamps: series.timestamps.clone(),
    }
}

/// Time-delay embedding: row `i` of the output is `(x_{i+k-1}, x_{i+k-2}, ..., x_i)`.
///
/// The first `k - 1` steps are dropped, so the result has `n - k + 1` rows and `k * D` columns.
pub fn embed(series: &TimeSeries, k: usize) -> Result<TimeSeries> {
    if k == 0 {
        return Err(Error::invalid("embedding dimension k must be at least 1"));
    }
    if k > series.len() {
        return Err(Error::invalid(format!(
            "embedding dimension k={k} exceeds series length {}",
            series.len()
        )));
    }
    if k == 1 {
        return Ok(series.clone());
    }
    let rows = series.len() - k + 1;
    let mut values = Vec::with_capacity(rows * k * series.dim());
    for i in 0..rows {
        for lag in 0..k {
            values.extend_from_slice(series.row(i + k - 1 - lag));
        }
    }
    let timestamps = series.timestamps.as_ref().map(|ts| ts[k - 1..].to_vec());
    Ok(TimeSeries {
        values,
        len: rows,
        dim: k * series.dim(),
        timestamps,
    })
}

/// Maps an interval on the embedded axis back to original time indices, clipped to `[0, n)`.
///
/// Embedded point `i` covers original steps `i..=i+k-1`.
pub fn map_interval_to_original(interval: Interval, k: usize, n: usize) -> Interval {
    let end = (interval.end + k.saturating_sub(1)).min(n);
    Interval {
        start: interval.start.min(end.saturating_sub(1)),
        end,
    }
}
