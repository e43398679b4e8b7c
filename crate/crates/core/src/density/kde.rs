use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::series::{Interval, TimeSeries};

/// Densities are clamped to this value before taking logarithms.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Kernel matrix of a series with row-wise prefix sums.
///
/// Row `t` stores `n + 1` values: entry `p` is the sum of `K(x_t, x_u)` over `u < p`, so the
/// leading zero plays the role of the cumulative sum "before index 0".
///
/// Prefix sums are kept as unevaluated pairs `hi + lo` (compensated summation), so a difference
/// of two prefixes keeps its relative accuracy even when the interval holds a tiny fraction of
/// the row's kernel mass.
#[derive(Debug, Clone)]
pub struct CumulativeKernel {
    prefix: Vec<f64>,
    prefix_lo: Vec<f64>,
    len: usize,
    dim: usize,
    log_norm: f64,
}

/// Normalized Gaussian kernel `(2 pi h^2)^(-D/2) exp(-|a - b|^2 / (2 h^2))`.
pub fn gaussian_kernel(a: &[f64], b: &[f64], bandwidth: f64) -> f64 {
    let dim = a.len() as f64;
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-0.5 * dim * (2.0 * PI * bandwidth * bandwidth).ln() - sq / (2.0 * bandwidth * bandwidth)).exp()
}

pub fn build_cumulative_kernel(series: &TimeSeries, bandwidth: f64) -> Result<CumulativeKernel> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let n = series.len();
    let dim = series.dim();
    let log_norm = -0.5 * dim as f64 * (2.0 * PI * bandwidth * bandwidth).ln();
    let inv_two_h2 = 1.0 / (2.0 * bandwidth * bandwidth);

    // Kernel values go into columns 1..=n of each row; the symmetric half is mirrored.
    let stride = n + 1;
    let mut prefix = vec![0.0; n * stride];
    for t in 0..n {
        let xt = series.row(t);
        for u in t..n {
            let sq: f64 = xt.iter().zip(series.row(u)).map(|(a, b)| (a - b) * (a - b)).sum();
            let k = (log_norm - sq * inv_two_h2).exp();
            prefix[t * stride + u + 1] = k;
            prefix[u * stride + t + 1] = k;
        }
    }
    let mut prefix_lo = vec![0.0; n * stride];
    for (row, lo) in prefix.chunks_exact_mut(stride).zip(prefix_lo.chunks_exact_mut(stride)) {
        for p in 1..stride {
            let (sum, err) = two_sum(row[p - 1], row[p]);
            row[p] = sum;
            lo[p] = lo[p - 1] + err;
        }
    }
    Ok(CumulativeKernel {
        prefix,
        prefix_lo,
        len: n,
        dim,
        log_norm,
    })
}

/// Densities inside `[s, e)` and outside it from one compensated prefix row.
#[inline]
pub(crate) fn row_densities(hi: &[f64], lo: &[f64], s: usize, e: usize) -> (f64, f64) {
    let n = hi.len() - 1;
    let (d, err) = two_sum(hi[e], -hi[s]);
    let inside = d + (err + (lo[e] - lo[s]));
    let (d, err) = two_sum(hi[n], -hi[e]);
    let outside = (d + hi[s]) + (err + (lo[n] - lo[e] + lo[s]));
    let m = (e - s) as f64;
    (inside / m, outside / (n as f64 - m))
}

/// Error-free transformation: `a + b == sum + err` exactly.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let sum = a + b;
    let bb = sum - a;
    let err = (a - (sum - bb)) + (b - bb);
    (sum, err)
}

impl CumulativeKernel {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Dimension of the space the kernel lives in.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Log of the kernel normalization constant.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// Sum of `K(x_t, x_u)` over `u < p`.
    #[inline]
    pub fn prefix(&self, t: usize, p: usize) -> f64 {
        let i = t * (self.len + 1) + p;
        self.prefix[i] + self.prefix_lo[i]
    }

    /// Cumulative sum `C[t][t']` over `u <= t'`; `t' = -1` yields zero.
    pub fn cumsum(&self, t: usize, t_prime: isize) -> f64 {
        self.prefix(t, (t_prime + 1) as usize)
    }

    pub fn row_total(&self, t: usize) -> f64 {
        self.prefix(t, self.len)
    }

    /// Raw (unfloored) KDE values `(p_I(x_t), p_Omega(x_t))`.
    #[inline]
    pub(crate) fn densities_unchecked(&self, interval: Interval, t: usize) -> (f64, f64) {
        let (hi, lo) = self.row_parts(t);
        row_densities(hi, lo, interval.start, interval.end)
    }

    /// Compensated prefix row `t` as `(hi, lo)`, each of length `n + 1`.
    #[inline]
    pub(crate) fn row_parts(&self, t: usize) -> (&[f64], &[f64]) {
        let offset = t * (self.len + 1);
        let end = offset + self.len + 1;
        (&self.prefix[offset..end], &self.prefix_lo[offset..end])
    }

    pub fn densities(&self, interval: Interval, t: usize) -> Result<(f64, f64)> {
        self.check_query(interval, t)?;
        Ok(self.densities_unchecked(interval, t))
    }

    pub(crate) fn check_interval(&self, interval: Interval) -> Result<()> {
        interval.check_within(self.len)?;
        if interval.len() >= self.len {
            return Err(Error::invalid(format!(
                "interval [{}, {}) leaves no points outside it (n = {})",
                interval.start, interval.end, self.len
            )));
        }
        Ok(())
    }

    fn check_query(&self, interval: Interval, t: usize) -> Result<()> {
        self.check_interval(interval)?;
        if t >= self.len {
            return Err(Error::invalid(format!(
                "time index {t} out of range (n = {})",
                self.len
            )));
        }
        Ok(())
    }
}

/// `(log p_I(x_t), log p_Omega(x_t))` with both densities floored at [`DENSITY_FLOOR`].
pub fn kde_log_densities(ck: &CumulativeKernel, interval: Interval, t: usize) -> Result<(f64, f64)> {
    let (p_in, p_out) = ck.densities(interval, t)?;
    Ok((p_in.max(DENSITY_FLOOR).ln(), p_out.max(DENSITY_FLOOR).ln()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_series(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> TimeSeries {
        let values = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        TimeSeries::new(values, n, dim).unwrap()
    }

    fn naive_kde(series: &TimeSeries, idx: impl Iterator<Item = usize>, t: usize, h: f64) -> f64 {
        let mut count = 0;
        let mut sum = 0.0;
        for u in idx {
            sum += gaussian_kernel(series.row(t), series.row(u), h);
            count += 1;
        }
        sum / count as f64
    }

    #[test]
    fn single_point_holds_normalization() {
        let s = TimeSeries::from_column(&[0.3]).unwrap();
        let ck = build_cumulative_kernel(&s, 0.5).unwrap();
        let expected = (2.0 * PI * 0.25f64).powf(-0.5);
        assert!((ck.cumsum(0, 0) - expected).abs() < 1e-15);
        assert_eq!(ck.cumsum(0, -1), 0.0);
    }

    #[test]
    fn two_identical_points() {
        let s = TimeSeries::from_column(&[1.0, 1.0]).unwrap();
        let ck = build_cumulative_kernel(&s, 1.0).unwrap();
        let k = (2.0 * PI).powf(-0.5);
        for t in 0..2 {
            assert!((ck.cumsum(t, 0) - k).abs() < 1e-15);
            assert!((ck.cumsum(t, 1) - 2.0 * k).abs() < 1e-15);
        }
        assert!((k - 0.3989).abs() < 1e-4);
    }

    #[test]
    fn row_totals_match_naive_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_series(&mut rng, 200, 2);
        let ck = build_cumulative_kernel(&s, 1.0).unwrap();
        for t in 0..s.len() {
            let naive: f64 = (0..s.len()).map(|u| gaussian_kernel(s.row(t), s.row(u), 1.0)).sum();
            assert!((ck.cumsum(t, 199) - naive).abs() <= 1e-9 * naive);
            // non-decreasing rows
            assert!((1..=s.len()).all(|p| ck.prefix(t, p) >= ck.prefix(t, p - 1)));
        }
    }

    #[test]
    fn one_point_complement() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_series(&mut rng, 20, 1);
        let ck = build_cumulative_kernel(&s, 1.0).unwrap();
        let iv = Interval::new(0, 19).unwrap();
        let (_, p_out) = ck.densities(iv, 4).unwrap();
        let direct = gaussian_kernel(s.row(4), s.row(19), 1.0);
        assert!((p_out - direct).abs() <= 1e-12 * direct.max(1e-300));
    }

    #[test]
    fn matches_naive_kde() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_series(&mut rng, 100, 3);
        let h = 0.8;
        let ck = build_cumulative_kernel(&s, h).unwrap();
        for _ in 0..300 {
            let start = rng.random_range(0..99);
            let end = rng.random_range(start + 1..100);
            let iv = Interval::new(start, end).unwrap();
            let t = rng.random_range(0..100);
            let (p_in, p_out) = ck.densities(iv, t).unwrap();
            let n_in = naive_kde(&s, start..end, t, h);
            let n_out = naive_kde(&s, (0..100).filter(|u| !iv.contains(*u)), t, h);
            assert!((p_in - n_in).abs() <= 1e-9 * n_in);
            assert!((p_out - n_out).abs() <= 1e-9 * n_out);
        }
    }

    #[test]
    fn identical_halves_give_equal_densities() {
        let s = TimeSeries::from_column(&[0.0, 1.0, 2.0, 0.0, 1.0, 2.0]).unwrap();
        let ck = build_cumulative_kernel(&s, 1.0).unwrap();
        let iv = Interval::new(0, 3).unwrap();
        for t in 0..6 {
            let (a, b) = kde_log_densities(&ck, iv, t).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn full_interval_is_rejected() {
        let s = TimeSeries::from_column(&[0.0, 1.0, 2.0]).unwrap();
        let ck = build_cumulative_kernel(&s, 1.0).unwrap();
        let iv = Interval::new(0, 3).unwrap();
        assert!(matches!(kde_log_densities(&ck, iv, 0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn floor_keeps_logs_finite() {
        let s = TimeSeries::from_column(&[0.0, 0.0, 1e4]).unwrap();
        let ck = build_cumulative_kernel(&s, 1.0).unwrap();
        let iv = Interval::new(2, 3).unwrap();
        let (a, b) = kde_log_densities(&ck, iv, 2).unwrap();
        assert!(a.is_finite());
        assert_eq!(b, DENSITY_FLOOR.ln());
    }
}
