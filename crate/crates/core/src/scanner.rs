//! Exhaustive search over candidate intervals and non-maximum suppression.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::gaussian::interval_stats_unchecked;
use crate::density::{build_cumulative_kernel, build_gaussian_cumulants, global_stats};
use crate::divergence::{empirical_kl_by_length, CovarianceMode, GaussianKl};
use crate::error::{Error, Result};
use crate::series::{embed, map_interval_to_original, Detection, Interval, TimeSeries};

/// Distribution model used to score intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanMethod {
    MdiKde,
    MdiGaussian,
}

impl fmt::Display for ScanMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScanMethod::MdiKde => "mdi-kde",
            ScanMethod::MdiGaussian => "mdi-gaussian",
        })
    }
}

impl FromStr for ScanMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mdi-kde" => Ok(ScanMethod::MdiKde),
            "mdi-gaussian" => Ok(ScanMethod::MdiGaussian),
            other => Err(Error::invalid(format!("unknown scan method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub min_length: usize,
    pub max_length: usize,
    pub top_m: usize,
    pub method: ScanMethod,
    pub cov_mode: CovarianceMode,
    pub embedding_k: usize,
    pub kde_bandwidth: f64,
    /// Relative diagonal loading for Gaussian covariance estimates.
    pub regularization: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            min_length: 10,
            max_length: 50,
            top_m: 5,
            method: ScanMethod::MdiGaussian,
            cov_mode: CovarianceMode::Full,
            embedding_k: 3,
            kde_bandwidth: 1.0,
            regularization: 1e-3,
        }
    }
}

impl ScanConfig {
    pub fn gaussian(cov_mode: CovarianceMode) -> Self {
        Self {
            method: ScanMethod::MdiGaussian,
            cov_mode,
            ..Self::default()
        }
    }

    pub fn kde() -> Self {
        Self {
            method: ScanMethod::MdiKde,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_length == 0 {
            return Err(Error::invalid("min_length must be at least 1"));
        }
        if self.min_length > self.max_length {
            return Err(Error::invalid(format!(
                "min_length {} exceeds max_length {}",
                self.min_length, self.max_length
            )));
        }
        if self.top_m == 0 {
            return Err(Error::invalid("top_m must be at least 1"));
        }
        if self.embedding_k == 0 {
            return Err(Error::invalid("embedding k must be at least 1"));
        }
        if !(self.kde_bandwidth > 0.0 && self.kde_bandwidth.is_finite()) {
            return Err(Error::invalid(format!(
                "bandwidth must be positive, got {}",
                self.kde_bandwidth
            )));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(Error::invalid(format!(
                "regularization must be non-negative, got {}",
                self.regularization
            )));
        }
        Ok(())
    }

    /// Shortest original series this configuration can scan.
    pub fn min_series_len(&self) -> usize {
        self.min_length + self.embedding_k
    }

    /// Length bounds on the embedded axis; the upper bound keeps at least one point outside.
    fn length_bounds(&self, embedded_len: usize) -> Result<(usize, usize)> {
        if embedded_len < self.min_length + 1 {
            return Err(Error::invalid(format!(
                "series too short: need at least {} time steps for min_length {} and k = {}, got {}",
                self.min_series_len(),
                self.min_length,
                self.embedding_k,
                embedded_len + self.embedding_k - 1
            )));
        }
        Ok((self.min_length, self.max_length.min(embedded_len - 1)))
    }
}

/// Number of candidate intervals with lengths in `[min_len, max_len]` on a series of length `n`.
pub fn candidate_count(n: usize, min_len: usize, max_len: usize) -> usize {
    (min_len..=max_len.min(n)).map(|l| n - l + 1).sum()
}

fn candidates_from(start: usize, n: usize, min_len: usize, max_len: usize) -> impl Iterator<Item = Interval> {
    (min_len..=max_len)
        .take_while(move |l| start + l <= n)
        .map(move |l| Interval { start, end: start + l })
}

/// Scores every candidate interval of the embedded series.
///
/// Intervals in the result are on the embedded axis, ordered by start and then by length.
/// Work is spread over the current rayon pool; the output does not depend on the pool size.
pub fn scan(series: &TimeSeries, config: &ScanConfig) -> Result<Vec<Detection>> {
    config.validate()?;
    if config.embedding_k > series.len() {
        return Err(Error::invalid(format!(
            "series too short: need at least {} time steps, got {}",
            config.min_series_len(),
            series.len()
        )));
    }
    let embedded = embed(series, config.embedding_k)?;
    scan_embedded(&embedded, config)
}

fn scan_embedded(embedded: &TimeSeries, config: &ScanConfig) -> Result<Vec<Detection>> {
    let n = embedded.len();
    let (min_len, max_len) = config.length_bounds(n)?;
    let starts = 0..=n - min_len;
    match config.method {
        ScanMethod::MdiKde => {
            let ck = build_cumulative_kernel(embedded, config.kde_bandwidth)?;
            Ok(starts
                .into_par_iter()
                .flat_map_iter(|start| {
                    let last = max_len.min(n - start);
                    empirical_kl_by_length(&ck, start, min_len, last)
                        .into_iter()
                        .zip(candidates_from(start, n, min_len, last))
                        .map(|(score, iv)| Detection::new(iv, score))
                        .collect::<Vec<_>>()
                })
                .collect())
        }
        ScanMethod::MdiGaussian => {
            let gc = build_gaussian_cumulants(embedded);
            let global = global_stats(&gc, config.regularization);
            let kl = GaussianKl::new(config.cov_mode, &global)?;
            let per_start: Vec<Result<Vec<Detection>>> = starts
                .into_par_iter()
                .map(|start| {
                    candidates_from(start, n, min_len, max_len)
                        .map(|iv| {
                            let (inside, outside) = interval_stats_unchecked(&gc, iv, config.regularization);
                            kl.evaluate(&inside, &outside)
                                .map(|score| Detection::new(iv, score))
                                .map_err(|e| Error::Numerical {
                                    interval: iv,
                                    reason: e.to_string(),
                                })
                        })
                        .collect()
                })
                .collect();
            let mut out = Vec::with_capacity(candidate_count(n, min_len, max_len));
            for chunk in per_start {
                out.extend(chunk?);
            }
            Ok(out)
        }
    }
}

/// Ranking order: higher score first, then earlier start, then shorter interval.
pub fn rank_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.interval.start.cmp(&b.interval.start))
        .then(a.interval.len().cmp(&b.interval.len()))
}

/// Highest-scoring candidate on the embedded axis.
pub fn argmax_interval(series: &TimeSeries, config: &ScanConfig) -> Result<Detection> {
    let all = scan(series, config)?;
    all.into_iter()
        .min_by(rank_order)
        .ok_or_else(|| Error::invalid("no candidate intervals"))
}

/// Greedy non-maximum suppression: keeps the best detections that share no time index.
pub fn nms(detections: &[Detection], top_m: usize) -> Vec<Detection> {
    let mut sorted = detections.to_vec();
    sorted.sort_by(rank_order);
    let mut kept: Vec<Detection> = Vec::with_capacity(top_m);
    for det in sorted {
        if kept.len() >= top_m {
            break;
        }
        if kept.iter().all(|k| !k.interval.overlaps(&det.interval)) {
            kept.push(det);
        }
    }
    kept
}

/// Full MDI detection: scan, map candidates to original indices, then keep the top `m`.
pub fn detect(series: &TimeSeries, config: &ScanConfig) -> Result<Vec<Detection>> {
    let candidates = scan(series, config)?;
    let n = series.len();
    let mapped: Vec<Detection> = candidates
        .into_iter()
        .map(|d| Detection::new(map_interval_to_original(d.interval, config.embedding_k, n), d.score))
        .collect();
    Ok(nms(&mapped, config.top_m))
}
