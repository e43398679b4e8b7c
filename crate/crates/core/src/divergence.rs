//! KL divergence between the distribution inside an interval and the one outside it.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::density::kde::row_densities;
use crate::density::{CumulativeKernel, GaussianStats, DENSITY_FLOOR};
use crate::error::{Error, Result};
use crate::series::Interval;

/// Covariance assumption of the Gaussian model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    /// Separate covariance estimates inside and outside the interval.
    #[default]
    Full,
    /// One covariance estimated from the whole series (Mahalanobis distance of the means).
    Shared,
    /// Identity covariances (squared Euclidean distance of the means).
    Identity,
}

impl fmt::Display for CovarianceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovarianceMode::Full => "full",
            CovarianceMode::Shared => "shared",
            CovarianceMode::Identity => "identity",
        })
    }
}

impl FromStr for CovarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(CovarianceMode::Full),
            "shared" => Ok(CovarianceMode::Shared),
            "identity" | "none" => Ok(CovarianceMode::Identity),
            other => Err(Error::invalid(format!("unknown covariance mode '{other}'"))),
        }
    }
}

/// Empirical KL estimate `mean_{t in I} (log p_I(x_t) - log p_Omega(x_t))` under the KDE model.
///
/// Can be negative since it is a sample estimate.
pub fn empirical_kl(ck: &CumulativeKernel, interval: Interval) -> Result<f64> {
    ck.check_interval(interval)?;
    Ok(empirical_kl_unchecked(ck, interval))
}

#[inline]
fn empirical_kl_unchecked(ck: &CumulativeKernel, interval: Interval) -> f64 {
    let mut acc = 0.0;
    for t in interval.start..interval.end {
        let (p_in, p_out) = ck.densities_unchecked(interval, t);
        acc += (p_in.max(DENSITY_FLOOR) / p_out.max(DENSITY_FLOOR)).ln();
    }
    acc / interval.len() as f64
}

/// Empirical KL of `[start, start + len)` for every `len` in `min_len..=max_len`.
///
/// Walks each kernel row once per start; each score equals [`empirical_kl`] exactly.
pub(crate) fn empirical_kl_by_length(ck: &CumulativeKernel, start: usize, min_len: usize, max_len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; max_len + 1 - min_len];
    for t in start..start + max_len {
        let (hi, lo) = ck.row_parts(t);
        let first = (t + 1).max(start + min_len);
        for end in first..=start + max_len {
            let (p_in, p_out) = row_densities(hi, lo, start, end);
            acc[end - start - min_len] += (p_in.max(DENSITY_FLOOR) / p_out.max(DENSITY_FLOOR)).ln();
        }
    }
    for (i, a) in acc.iter_mut().enumerate() {
        *a /= (min_len + i) as f64;
    }
    acc
}

fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::Factorization(format!("{what} covariance is not positive definite")))
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Squared norm of `L^-1 v`, i.e. `v^T S^-1 v` for `S = L L^T`.
fn whitened_norm_sq(chol: &Cholesky<f64, Dyn>, v: &DVector<f64>) -> f64 {
    let l = chol.l();
    let w = l
        .solve_lower_triangular(v)
        .expect("cholesky factor has a positive diagonal");
    w.norm_squared()
}

/// Closed-form `KL(N(mu_I, S_I) || N(mu_Omega, S_Omega))`.
pub fn gaussian_kl_full(inside: &GaussianStats, outside: &GaussianStats) -> Result<f64> {
    check_dims(inside, outside)?;
    let chol_in = cholesky(&inside.cov, "interval")?;
    let chol_out = cholesky(&outside.cov, "complement")?;
    Ok(kl_from_factors(inside, outside, &chol_in, &chol_out))
}

fn kl_from_factors(
    inside: &GaussianStats,
    outside: &GaussianStats,
    chol_in: &Cholesky<f64, Dyn>,
    chol_out: &Cholesky<f64, Dyn>,
) -> f64 {
    let dim = inside.dim() as f64;
    // trace(S_out^-1 S_in) = || L_out^-1 L_in ||_F^2
    let l_out = chol_out.l();
    let trace = l_out
        .solve_lower_triangular(&chol_in.l())
        .expect("cholesky factor has a positive diagonal")
        .norm_squared();
    let diff = &inside.mean - &outside.mean;
    let maha = whitened_norm_sq(chol_out, &diff);
    0.5 * (trace + maha - dim + log_det(chol_out) - log_det(chol_in))
}

/// Reverse divergence `KL(p_Omega || p_I)`; a diagnostic, the detector uses the forward direction.
pub fn gaussian_kl_reverse(inside: &GaussianStats, outside: &GaussianStats) -> Result<f64> {
    gaussian_kl_full(outside, inside)
}

fn check_dims(a: &GaussianStats, b: &GaussianStats) -> Result<()> {
    if a.dim() != b.dim() || a.cov.nrows() != a.dim() || b.cov.nrows() != b.dim() {
        return Err(Error::invalid(format!(
            "dimension mismatch between Gaussian statistics ({} vs {})",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Gaussian divergence for one covariance mode, with any per-series state prepared up front.
#[derive(Debug, Clone)]
pub enum GaussianKl {
    Full,
    /// Factor of the global covariance.
    Shared(Cholesky<f64, Dyn>),
    Identity,
}

impl GaussianKl {
    /// `global` is only consulted for [`CovarianceMode::Shared`].
    pub fn new(mode: CovarianceMode, global: &GaussianStats) -> Result<Self> {
        Ok(match mode {
            CovarianceMode::Full => GaussianKl::Full,
            CovarianceMode::Identity => GaussianKl::Identity,
            CovarianceMode::Shared => GaussianKl::Shared(cholesky(&global.cov, "global")?),
        })
    }

    pub fn mode(&self) -> CovarianceMode {
        match self {
            GaussianKl::Full => CovarianceMode::Full,
            GaussianKl::Shared(_) => CovarianceMode::Shared,
            GaussianKl::Identity => CovarianceMode::Identity,
        }
    }

    /// FULL: closed-form KL. SHARED: `(mu_I - mu_Omega)^T S^-1 (mu_I - mu_Omega)` without the
    /// one-half factor. IDENTITY: `|mu_I - mu_Omega|^2`.
    pub fn evaluate(&self, inside: &GaussianStats, outside: &GaussianStats) -> Result<f64> {
        check_dims(inside, outside)?;
        match self {
            GaussianKl::Full => gaussian_kl_full(inside, outside),
            GaussianKl::Shared(chol) => {
                if chol.l_dirty().nrows() != inside.dim() {
                    return Err(Error::invalid("shared covariance has the wrong dimension"));
                }
                Ok(whitened_norm_sq(chol, &(&inside.mean - &outside.mean)))
            }
            GaussianKl::Identity => Ok((&inside.mean - &outside.mean).norm_squared()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::build_cumulative_kernel;
    use crate::series::TimeSeries;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn by_length_matches_single_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let col: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ck = build_cumulative_kernel(&TimeSeries::from_column(&col).unwrap(), 0.7).unwrap();
        for start in [0, 17, 40] {
            let scores = empirical_kl_by_length(&ck, start, 3, 19);
            for (i, score) in scores.iter().enumerate() {
                let iv = Interval::new(start, start + 3 + i).unwrap();
                assert_eq!(*score, empirical_kl(&ck, iv).unwrap());
            }
        }
    }

    fn uni(mean: f64, var: f64) -> GaussianStats {
        GaussianStats {
            mean: DVector::from_element(1, mean),
            cov: DMatrix::from_element(1, 1, var),
            count: 10,
        }
    }

    fn random_pd(rng: &mut ChaCha8Rng, d: usize) -> GaussianStats {
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.1;
        GaussianStats {
            mean: DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0)),
            cov,
            count: 10,
        }
    }

    #[test]
    fn identical_stats_have_zero_divergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in 1..6 {
            let s = random_pd(&mut rng, d);
            assert!(gaussian_kl_full(&s, &s).unwrap().abs() < 1e-10);
            assert!(gaussian_kl_reverse(&s, &s).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn hand_evaluated_values() {
        assert!((gaussian_kl_full(&uni(1.0, 1.0), &uni(0.0, 1.0)).unwrap() - 0.5).abs() < 1e-12);
        let expected = 0.5 * (0.25 - 1.0 + 4f64.ln());
        assert!((gaussian_kl_full(&uni(0.0, 1.0), &uni(0.0, 4.0)).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.3181).abs() < 1e-4);
    }

    #[test]
    fn identity_mode_is_squared_euclidean() {
        let a = GaussianStats {
            mean: DVector::from_vec(vec![1.0, 0.0]),
            cov: DMatrix::identity(2, 2),
            count: 3,
        };
        let b = GaussianStats {
            mean: DVector::zeros(2),
            ..a.clone()
        };
        let kl = GaussianKl::new(CovarianceMode::Identity, &a).unwrap();
        assert_eq!(kl.evaluate(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn reverse_direction_penalizes_low_variance() {
        let inside = uni(0.0, 0.01);
        let outside = uni(0.0, 1.0);
        let rev = gaussian_kl_reverse(&inside, &outside).unwrap();
        let fwd = gaussian_kl_full(&inside, &outside).unwrap();
        assert!((rev - 0.5 * (100.0 - 1.0 + 0.01f64.ln())).abs() < 1e-10);
        assert!((fwd - 0.5 * (0.01 - 1.0 + 100f64.ln())).abs() < 1e-10);
        assert!((rev - 47.2).abs() < 0.01 && (fwd - 1.807).abs() < 1e-3);
    }

    #[test]
    fn asymmetry_growth_rates() {
        let outside = uni(0.0, 1.0);
        let (mut rev, mut fwd) = (vec![], vec![]);
        for j in 1..=4 {
            let inside = uni(0.0, 10f64.powi(-j));
            rev.push(gaussian_kl_reverse(&inside, &outside).unwrap());
            fwd.push(gaussian_kl_full(&inside, &outside).unwrap());
        }
        // reverse grows like 1 / S_I, forward like (j / 2) log 10
        let last_ratio = rev[3] / rev[2];
        assert!((last_ratio / 10.0 - 1.0).abs() < 0.05);
        let last_diff = fwd[3] - fwd[2];
        assert!((last_diff / (0.5 * 10f64.ln()) - 1.0).abs() < 0.05);
    }

    #[test]
    fn shared_is_twice_full_with_equal_covariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let global = random_pd(&mut rng, 4);
            let mut a = random_pd(&mut rng, 4);
            let mut b = random_pd(&mut rng, 4);
            a.cov = global.cov.clone();
            b.cov = global.cov.clone();
            let shared = GaussianKl::new(CovarianceMode::Shared, &global).unwrap();
            let s = shared.evaluate(&a, &b).unwrap();
            let f = gaussian_kl_full(&a, &b).unwrap();
            assert!((s - 2.0 * f).abs() <= 1e-9 * s.max(1.0));
        }
    }

    #[test]
    fn full_kl_is_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let d = rng.random_range(1..8);
            let a = random_pd(&mut rng, d);
            let b = random_pd(&mut rng, d);
            assert!(gaussian_kl_full(&a, &b).unwrap() >= -1e-10);
        }
    }

    #[test]
    fn non_pd_covariance_is_a_numerical_error() {
        let bad = uni(0.0, -1.0);
        let err = gaussian_kl_full(&bad, &uni(0.0, 1.0)).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn empirical_kl_cases() {
        let s = TimeSeries::from_column(&[1.0; 12]).unwrap();
        let ck = build_cumulative_kernel(&s, 1.0).unwrap();
        assert!(empirical_kl(&ck, Interval::new(3, 7).unwrap()).unwrap().abs() < 1e-12);

        let mut values = vec![0.0; 20];
        values
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = (i % 3) as f64 * 0.1);
        values[8..12].iter_mut().for_each(|v| *v += 15.0);
        let s = TimeSeries::from_column(&values).unwrap();
        let ck = build_cumulative_kernel(&s, 1.0).unwrap();
        assert!(empirical_kl(&ck, Interval::new(8, 12).unwrap()).unwrap() > 0.0);
    }

    #[test]
    fn empirical_kl_matches_naive() {
        use crate::density::gaussian_kernel;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 100;
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s = TimeSeries::from_column(&values).unwrap();
        let ck = build_cumulative_kernel(&s, 1.0).unwrap();
        for start in (0..n - 1).step_by(7) {
            for end in (start + 1..n).step_by(5) {
                let iv = Interval::new(start, end).unwrap();
                let mut naive = 0.0;
                for t in start..end {
                    let k: Vec<f64> = (0..n).map(|u| gaussian_kernel(s.row(t), s.row(u), 1.0)).collect();
                    let p_in: f64 = k[start..end].iter().sum::<f64>() / iv.len() as f64;
                    let p_out: f64 =
                        (k[..start].iter().sum::<f64>() + k[end..].iter().sum::<f64>()) / (n - iv.len()) as f64;
                    naive += p_in.ln() - p_out.ln();
                }
                naive /= iv.len() as f64;
                assert!((empirical_kl(&ck, iv).unwrap() - naive).abs() < 1e-8);
            }
        }
    }
}
