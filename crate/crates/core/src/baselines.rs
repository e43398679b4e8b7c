//! Pointwise baselines and the threshold grouping that turns their scores into intervals.

use nalgebra::DVector;

use crate::density::{build_gaussian_cumulants, gaussian_kernel, global_stats, DENSITY_FLOOR};
use crate::error::{Error, Result};
use crate::scanner::nms;
use crate::series::{embed, Detection, Interval, TimeSeries};

/// One non-negative score per original time step.
#[derive(Debug, Clone, PartialEq)]
pub struct PointScores {
    pub scores: Vec<f64>,
}

impl PointScores {
    pub fn new(scores: Vec<f64>) -> Self {
        Self { scores }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Spreads scores of an embedded series back to original indices; the first `k - 1` steps get 0.
    fn from_embedded(embedded: Vec<f64>, k: usize) -> Self {
        let mut scores = vec![0.0; k - 1];
        scores.extend(embedded);
        Self { scores }
    }
}

/// Hotelling's T^2 statistic of each embedded point against the global mean and covariance.
pub fn hotelling_t2(series: &TimeSeries, k: usize, regularization: f64) -> Result<PointScores> {
    let embedded = embed(series, k)?;
    if embedded.len() <= embedded.dim() {
        return Err(Error::invalid(format!(
            "Hotelling's T^2 needs more embedded points ({}) than dimensions ({})",
            embedded.len(),
            embedded.dim()
        )));
    }
    let gc = build_gaussian_cumulants(&embedded);
    let global = global_stats(&gc, regularization);
    let chol = nalgebra::Cholesky::new(global.cov.clone())
        .ok_or_else(|| Error::Factorization("global covariance is not positive definite".into()))?;
    let l = chol.l();
    let scores = embedded
        .rows()
        .map(|x| {
            let diff = DVector::from_row_slice(x) - &global.mean;
            l.solve_lower_triangular(&diff)
                .expect("cholesky factor has a positive diagonal")
                .norm_squared()
        })
        .collect();
    Ok(PointScores::from_embedded(scores, k))
}

/// Negative log KDE density of each embedded point, using all points (itself included).
pub fn pointwise_kde(series: &TimeSeries, k: usize, bandwidth: f64) -> Result<PointScores> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let embedded = embed(series, k)?;
    let n = embedded.len();
    let scores = (0..n)
        .map(|t| {
            let sum: f64 = (0..n)
                .map(|u| gaussian_kernel(embedded.row(t), embedded.row(u), bandwidth))
                .sum();
            -(sum / n as f64).max(DENSITY_FLOOR).ln()
        })
        .collect();
    Ok(PointScores::from_embedded(scores, k))
}

/// Options for grouping point scores into intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupingConfig {
    pub num_thresholds: usize,
    pub top_m: usize,
    /// Optional `(min, max)` length filter applied before NMS. Off by default.
    pub length_bounds: Option<(usize, usize)>,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self {
            num_thresholds: 25,
            top_m: 5,
            length_bounds: None,
        }
    }
}

/// Thresholds at evenly spaced ranks from the median to the maximum of the positive scores,
/// in descending order.
pub fn quantile_thresholds(scores: &PointScores, num_thresholds: usize) -> Vec<f64> {
    let mut positive: Vec<f64> = scores.scores.iter().copied().filter(|s| *s > 0.0).collect();
    if positive.is_empty() || num_thresholds == 0 {
        return Vec::new();
    }
    positive.sort_by(f64::total_cmp);
    let last = (positive.len() - 1) as f64;
    let mut thresholds: Vec<f64> = (0..num_thresholds)
        .map(|i| {
            let q = if num_thresholds == 1 {
                1.0
            } else {
                0.5 + 0.5 * i as f64 / (num_thresholds - 1) as f64
            };
            positive[(q * last).round() as usize]
        })
        .collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    thresholds
}

/// Maximal runs with `score >= threshold` at each threshold, scored by their minimum,
/// deduplicated and reduced by NMS.
pub fn group_runs(scores: &PointScores, thresholds: &[f64], config: &GroupingConfig) -> Vec<Detection> {
    let mut pool: Vec<Detection> = Vec::new();
    for &theta in thresholds {
        let mut t = 0;
        let s = &scores.scores;
        while t < s.len() {
            if s[t] >= theta && s[t] > 0.0 {
                let start = t;
                let mut min = s[t];
                while t < s.len() && s[t] >= theta {
                    min = min.min(s[t]);
                    t += 1;
                }
                pool.push(Detection::new(Interval { start, end: t }, min));
            } else {
                t += 1;
            }
        }
    }
    if let Some((lo, hi)) = config.length_bounds {
        pool.retain(|d| (lo..=hi).contains(&d.interval.len()));
    }
    // identical intervals always carry the same minimum, so keeping the first copy is enough
    pool.sort_by_key(|d| d.interval);
    pool.dedup_by_key(|d| d.interval);
    nms(&pool, config.top_m)
}

pub fn scores_to_intervals(scores: &PointScores, config: &GroupingConfig) -> Result<Vec<Detection>> {
    if config.num_thresholds == 0 {
        return Err(Error::invalid("num_thresholds must be at least 1"));
    }
    let thresholds = quantile_thresholds(scores, config.num_thresholds);
    Ok(group_runs(scores, &thresholds, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hotelling_hand_value() {
        // mean 0 and population variance 1
        let s = TimeSeries::from_column(&[2.0, -2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let scores = hotelling_t2(&s, 1, 0.0).unwrap();
        assert!((scores.scores[0] - 4.0).abs() < 1e-6);
        assert!(scores.scores[2].abs() < 1e-12);
    }

    #[test]
    fn hotelling_matches_explicit_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 60;
        let values: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s = TimeSeries::new(values, n, 3).unwrap();
        let scores = hotelling_t2(&s, 1, 1e-3).unwrap();
        let gc = build_gaussian_cumulants(&s);
        let g = global_stats(&gc, 1e-3);
        let inv: DMatrix<f64> = g.cov.clone().try_inverse().unwrap();
        for t in 0..n {
            let d = DVector::from_row_slice(s.row(t)) - &g.mean;
            let direct = (d.transpose() * &inv * &d)[(0, 0)];
            assert!((scores.scores[t] - direct).abs() < 1e-8);
        }
        let min_t = (0..n)
            .min_by(|&a, &b| scores.scores[a].total_cmp(&scores.scores[b]))
            .unwrap();
        assert!(scores.scores[min_t] >= 0.0);
    }

    #[test]
    fn embedded_scores_pad_the_first_steps() {
        let s = TimeSeries::from_column(&(0..30).map(|t| (t as f64).sin()).collect::<Vec<_>>()).unwrap();
        let h = hotelling_t2(&s, 3, 1e-3).unwrap();
        let p = pointwise_kde(&s, 3, 1.0).unwrap();
        assert_eq!(h.len(), 30);
        assert_eq!(p.len(), 30);
        assert_eq!(&h.scores[..2], &[0.0, 0.0]);
        assert_eq!(&p.scores[..2], &[0.0, 0.0]);
    }

    #[test]
    fn pointwise_kde_uniform_and_outlier() {
        let s = TimeSeries::from_column(&[0.5; 10]).unwrap();
        let p = pointwise_kde(&s, 1, 0.7).unwrap();
        let expected = 0.5 * (2.0 * std::f64::consts::PI * 0.49f64).ln();
        assert!(p.scores.iter().all(|v| (v - expected).abs() < 1e-12));

        let mut values = vec![0.0, 0.1, -0.1, 0.05, -0.05, 0.02];
        values.push(30.0);
        let s = TimeSeries::from_column(&values).unwrap();
        let p = pointwise_kde(&s, 1, 1.0).unwrap();
        assert!(p.scores[..6].iter().all(|v| *v < p.scores[6]));
    }

    #[test]
    fn pointwise_kde_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let values: Vec<f64> = (0..200).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s = TimeSeries::new(values, 100, 2).unwrap();
        let p = pointwise_kde(&s, 1, 0.9).unwrap();
        for t in 0..100 {
            let mut sum = 0.0;
            for u in 0..100 {
                let sq: f64 = (0..2).map(|d| (s.get(t, d) - s.get(u, d)).powi(2)).sum();
                sum += (2.0 * std::f64::consts::PI * 0.81).powi(-1) * (-sq / (2.0 * 0.81)).exp();
            }
            let density = (-p.scores[t]).exp();
            assert!((density - sum / 100.0).abs() <= 1e-9 * density);
        }
    }

    #[test]
    fn single_bump_groups_to_one_run() {
        let scores = PointScores::new(vec![0.0, 0.0, 5.0, 6.0, 5.0, 0.0, 0.0]);
        let out = group_runs(&scores, &[5.0, 4.0, 1.0], &GroupingConfig::default());
        assert_eq!(out, vec![Detection::new(Interval::new(2, 5).unwrap(), 5.0)]);
    }

    #[test]
    fn threshold_at_max_selects_last_point() {
        let scores = PointScores::new((1..=10).map(f64::from).collect());
        let config = GroupingConfig {
            num_thresholds: 1,
            ..GroupingConfig::default()
        };
        let out = scores_to_intervals(&scores, &config).unwrap();
        assert_eq!(out, vec![Detection::new(Interval::new(9, 10).unwrap(), 10.0)]);
    }

    #[test]
    fn two_bumps_stay_disjoint_and_ordered() {
        let mut s = vec![0.0; 40];
        for (i, v) in [2.0, 6.0, 10.0, 6.0, 2.0].iter().enumerate() {
            s[5 + i] = *v;
            s[25 + i] = v * 0.8;
        }
        let scores = PointScores::new(s);
        let out = group_runs(&scores, &[8.0, 4.8, 1.6], &GroupingConfig::default());
        assert_eq!(out.len(), 2);
        assert!(!out[0].interval.overlaps(&out[1].interval));
        assert!(out[0].interval.start < 20 && out[1].interval.start >= 20);
        assert!(out[0].score >= out[1].score);
    }

    #[test]
    fn all_zero_scores_give_nothing() {
        let scores = PointScores::new(vec![0.0; 10]);
        assert!(scores_to_intervals(&scores, &GroupingConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn thresholds_are_descending_from_max() {
        let scores = PointScores::new((0..=100).map(f64::from).collect());
        let th = quantile_thresholds(&scores, 5);
        assert_eq!(th.first(), Some(&100.0));
        assert!(th.windows(2).all(|w| w[0] > w[1]));
        assert!(*th.last().unwrap() >= 50.0);
    }
}
