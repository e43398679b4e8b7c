//! Synthetic benchmark: Gaussian process draws with injected anomalies.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{Interval, TimeSeries};

pub const SERIES_LENGTH: usize = 250;
pub const INSTANCES_PER_GROUP: usize = 20;
pub const MULTIVARIATE_DIM: usize = 5;

const INITIAL_JITTER: f64 = 1e-8;
const MAX_JITTER: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnomalyType {
    /// Mean shift by `mu` in `[3, 4]`.
    #[serde(rename = "MS")]
    MeanShift,
    /// Mean shift by `mu` in `[0.5, 1]`.
    #[serde(rename = "MSH")]
    MeanShiftHard,
    /// Amplitude modulation by a Gaussian window.
    #[serde(rename = "AC")]
    AmplitudeChange,
    /// Local change of the GP lengthscale.
    #[serde(rename = "FC")]
    FrequencyChange,
}

impl AnomalyType {
    pub fn code(self) -> &'static str {
        match self {
            AnomalyType::MeanShift => "MS",
            AnomalyType::MeanShiftHard => "MSH",
            AnomalyType::AmplitudeChange => "AC",
            AnomalyType::FrequencyChange => "FC",
        }
    }
}

impl fmt::Display for AnomalyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for AnomalyType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "MS" => Ok(AnomalyType::MeanShift),
            "MSH" => Ok(AnomalyType::MeanShiftHard),
            "AC" => Ok(AnomalyType::AmplitudeChange),
            "FC" => Ok(AnomalyType::FrequencyChange),
            other => Err(Error::invalid(format!("unknown anomaly type '{other}'"))),
        }
    }
}

/// One column of the benchmark table: an anomaly type, univariate or with `D = 5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InstanceGroup {
    pub anomaly: AnomalyType,
    pub multivariate: bool,
}

impl InstanceGroup {
    /// The seven benchmark groups in table order.
    pub const ALL: [InstanceGroup; 7] = [
        InstanceGroup::uni(AnomalyType::MeanShift),
        InstanceGroup::uni(AnomalyType::MeanShiftHard),
        InstanceGroup::uni(AnomalyType::AmplitudeChange),
        InstanceGroup::uni(AnomalyType::FrequencyChange),
        InstanceGroup::multi(AnomalyType::MeanShift),
        InstanceGroup::multi(AnomalyType::FrequencyChange),
        InstanceGroup::multi(AnomalyType::AmplitudeChange),
    ];

    pub const fn uni(anomaly: AnomalyType) -> Self {
        Self {
            anomaly,
            multivariate: false,
        }
    }

    pub const fn multi(anomaly: AnomalyType) -> Self {
        Self {
            anomaly,
            multivariate: true,
        }
    }

    pub fn dim(&self) -> usize {
        if self.multivariate {
            MULTIVARIATE_DIM
        } else {
            1
        }
    }

    /// Group label such as `MS` or `FC5`.
    pub fn name(&self) -> String {
        if self.multivariate {
            format!("{}{}", self.anomaly.code(), MULTIVARIATE_DIM)
        } else {
            self.anomaly.code().to_string()
        }
    }
}

/// Width of the amplitude-change window relative to the interval length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowWidth {
    /// `sigma = |I| / 2`
    HalfLength,
    /// `sigma = |I| / 4`
    QuarterLength,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectionParams {
    pub ms_range: (f64, f64),
    pub msh_range: (f64, f64),
    pub ac_amplitude: f64,
    pub ac_window: WindowWidth,
    /// Lengthscale of the base process (outside the anomaly for FC).
    pub lengthscale: f64,
    /// Lengthscale inside the FC anomaly.
    pub fc_lengthscale: f64,
}

impl Default for InjectionParams {
    fn default() -> Self {
        Self {
            ms_range: (3.0, 4.0),
            msh_range: (0.5, 1.0),
            ac_amplitude: 1.0,
            ac_window: WindowWidth::HalfLength,
            lengthscale: 1.0,
            fc_lengthscale: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetInstance {
    pub id: String,
    pub group: InstanceGroup,
    pub series: TimeSeries,
    pub ground_truth: Vec<Interval>,
    /// Column holding the anomaly; not visible to detectors.
    pub affected_dimension: usize,
}

/// Squared-exponential kernel `exp(-(t - t')^2 / (2 l^2))` on integer time steps.
pub fn stationary_kernel_matrix(n: usize, lengthscale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        let d = i as f64 - j as f64;
        (-d * d / (2.0 * lengthscale * lengthscale)).exp()
    })
}

/// Paciorek-Schervish kernel for a per-step lengthscale `l(t)`:
/// `sqrt(2 l l' / (l^2 + l'^2)) * exp(-(t - t')^2 / (l^2 + l'^2))`.
pub fn paciorek_kernel_matrix(lengthscales: &[f64]) -> DMatrix<f64> {
    let n = lengthscales.len();
    DMatrix::from_fn(n, n, |i, j| {
        let (li, lj) = (lengthscales[i], lengthscales[j]);
        let sum_sq = li * li + lj * lj;
        let d = i as f64 - j as f64;
        (2.0 * li * lj / sum_sq).sqrt() * (-d * d / sum_sq).exp()
    })
}

/// Cholesky factor with diagonal jitter, escalated 10x per failure up to `1e-4`.
fn jittered_cholesky(kernel: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = kernel.nrows();
    let mut jitter = INITIAL_JITTER;
    while jitter <= MAX_JITTER * 1.000_001 {
        let m = kernel + DMatrix::identity(n, n) * jitter;
        if let Some(chol) = Cholesky::new(m) {
            return Ok(chol);
        }
        jitter *= 10.0;
    }
    Err(Error::Factorization(format!(
        "GP covariance of size {n} is not positive definite even with jitter {MAX_JITTER}"
    )))
}

fn draw(chol: &Cholesky<f64, Dyn>, rng: &mut impl Rng) -> Vec<f64> {
    let n = chol.l_dirty().nrows();
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (chol.l() * z).iter().copied().collect()
}

fn sample_columns(chol: &Cholesky<f64, Dyn>, dim: usize, rng: &mut impl Rng) -> Result<TimeSeries> {
    let n = chol.l_dirty().nrows();
    let columns: Vec<Vec<f64>> = (0..dim).map(|_| draw(chol, rng)).collect();
    let values = (0..n).flat_map(|t| columns.iter().map(move |c| c[t])).collect();
    TimeSeries::new(values, n, dim)
}

/// Draws `dim` independent zero-mean GP columns with a squared-exponential kernel.
pub fn sample_gp(n: usize, dim: usize, lengthscale: f64, rng_seed: u64) -> Result<TimeSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_gp_with(n, dim, lengthscale, &mut rng)
}

fn sample_gp_with(n: usize, dim: usize, lengthscale: f64, rng: &mut impl Rng) -> Result<TimeSeries> {
    if n == 0 || dim == 0 {
        return Err(Error::invalid("GP sample needs n >= 1 and D >= 1"));
    }
    if !(lengthscale > 0.0 && lengthscale.is_finite()) {
        return Err(Error::invalid(format!(
            "lengthscale must be positive, got {lengthscale}"
        )));
    }
    let chol = jittered_cholesky(&stationary_kernel_matrix(n, lengthscale))?;
    sample_columns(&chol, dim, rng)
}

/// Window `a * exp(-(t - c)^2 / (2 sigma^2))` centred in the interval.
pub fn amplitude_window(interval: Interval, t: usize, amplitude: f64, width: WindowWidth) -> f64 {
    let center = (interval.start as f64 + interval.end as f64 - 1.0) / 2.0;
    let sigma = match width {
        WindowWidth::HalfLength => interval.len() as f64 / 2.0,
        WindowWidth::QuarterLength => interval.len() as f64 / 4.0,
    };
    let d = t as f64 - center;
    amplitude * (-d * d / (2.0 * sigma * sigma)).exp()
}

/// Applies one anomaly to column `dim` within `interval`; other columns are left untouched.
pub fn inject_anomaly(
    series: &TimeSeries,
    anomaly: AnomalyType,
    interval: Interval,
    dim: usize,
    rng_seed: u64,
    params: &InjectionParams,
) -> Result<TimeSeries> {
    interval.check_within(series.len())?;
    if dim >= series.dim() {
        return Err(Error::invalid(format!(
            "dimension {dim} out of range for a {}-dimensional series",
            series.dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut column = series.column(dim);
    match anomaly {
        AnomalyType::MeanShift | AnomalyType::MeanShiftHard => {
            let (lo, hi) = if anomaly == AnomalyType::MeanShift {
                params.ms_range
            } else {
                params.msh_range
            };
            let mu = rng.random_range(lo..=hi);
            shift_mean(&mut column, interval, mu);
        }
        AnomalyType::AmplitudeChange => {
            for (t, v) in column.iter_mut().enumerate().take(interval.end).skip(interval.start) {
                *v *= 1.0 + amplitude_window(interval, t, params.ac_amplitude, params.ac_window);
            }
        }
        AnomalyType::FrequencyChange => {
            let lengthscales: Vec<f64> = (0..series.len())
                .map(|t| {
                    if interval.contains(t) {
                        params.fc_lengthscale
                    } else {
                        params.lengthscale
                    }
                })
                .collect();
            let chol = jittered_cholesky(&paciorek_kernel_matrix(&lengthscales))?;
            column = draw(&chol, &mut rng);
        }
    }
    let mut out = series.clone();
    out.set_column(dim, &column);
    Ok(out)
}

/// `x_t <- x_t - mu` inside the interval.
pub fn shift_mean(column: &mut [f64], interval: Interval, mu: f64) {
    column[interval.start..interval.end].iter_mut().for_each(|v| *v -= mu);
}

/// Ground-truth length range: 5% to 20% of `n`, rounded inward.
pub fn anomaly_length_bounds(n: usize) -> (usize, usize) {
    ((n * 5).div_ceil(100), n * 20 / 100)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub series_length: usize,
    pub instances_per_group: usize,
    pub groups: Vec<InstanceGroup>,
    pub params: InjectionParams,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            series_length: SERIES_LENGTH,
            instances_per_group: INSTANCES_PER_GROUP,
            groups: InstanceGroup::ALL.to_vec(),
            params: InjectionParams::default(),
        }
    }
}

/// The full benchmark: 7 groups of 20 instances, each with one injected anomaly.
pub fn generate_dataset(rng_seed: u64) -> Result<Vec<DatasetInstance>> {
    generate_dataset_with(rng_seed, &GeneratorConfig::default())
}

pub fn generate_dataset_with(rng_seed: u64, config: &GeneratorConfig) -> Result<Vec<DatasetInstance>> {
    let mut out = Vec::with_capacity(config.groups.len() * config.instances_per_group);
    for (g, group) in config.groups.iter().enumerate() {
        for i in 0..config.instances_per_group {
            let index = (g * config.instances_per_group + i) as u64;
            out.push(generate_instance(rng_seed, index, *group, i, config)?);
        }
    }
    Ok(out)
}

/// Each instance draws from its own stream so it can be regenerated independently.
fn generate_instance(
    rng_seed: u64,
    index: u64,
    group: InstanceGroup,
    within_group: usize,
    config: &GeneratorConfig,
) -> Result<DatasetInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(index);
    let n = config.series_length;
    let (min_len, max_len) = anomaly_length_bounds(n);
    if min_len == 0 || max_len < min_len {
        return Err(Error::invalid(format!(
            "series length {n} is too short for the benchmark"
        )));
    }
    let len = rng.random_range(min_len..=max_len);
    let start = rng.random_range(0..=n - len);
    let interval = Interval {
        start,
        end: start + len,
    };
    let affected = rng.random_range(0..group.dim());
    let base = sample_gp_with(n, group.dim(), config.params.lengthscale, &mut rng)?;
    let series = inject_anomaly(&base, group.anomaly, interval, affected, rng.next_u64(), &config.params)?;
    Ok(DatasetInstance {
        id: format!("{}-{:02}", group.name(), within_group),
        group,
        series,
        ground_truth: vec![interval],
        affected_dimension: affected,
    })
}
