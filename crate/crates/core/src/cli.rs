//! Command-line front end: `generate`, `detect`, `evaluate` and `bench`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::density::{build_cumulative_kernel, build_gaussian_cumulants};
use crate::divergence::CovarianceMode;
use crate::error::{Error, Result};
use crate::evaluation::InstanceDetection;
use crate::io::{self, Dataset};
use crate::pipeline::{detect_dataset, evaluate_dataset, run_detector, tag_detections, DetectorConfig, Method};
use crate::scanner::{scan, ScanConfig, ScanMethod};
use crate::series::{embed, standardize};
use crate::synthesis::{generate_dataset, sample_gp};

#[derive(Debug, Parser)]
#[command(name = "mdi", version, about = "Maximally divergent interval anomaly detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic benchmark dataset as JSON.
    Generate {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect anomalous intervals in a CSV file or in every instance of a dataset.
    Detect(DetectArgs),
    /// Score detections against a dataset's ground truth.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long = "iou", default_value_t = 0.5)]
        iou: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Plot-ready precision-recall curves (two columns per group).
        #[arg(long)]
        pr_out: Option<PathBuf>,
    },
    /// Time the scan for increasing series lengths.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct MethodArgs {
    #[arg(long, default_value = "mdi-gaussian")]
    pub method: String,
    #[arg(long, default_value = "full")]
    pub cov: String,
    #[arg(long = "embed", default_value_t = 3)]
    pub embed: usize,
    #[arg(long = "min-len", default_value_t = 10)]
    pub min_len: usize,
    #[arg(long = "max-len", default_value_t = 50)]
    pub max_len: usize,
    #[arg(long = "top", default_value_t = 5)]
    pub top: usize,
    #[arg(long, default_value_t = 1.0)]
    pub bandwidth: f64,
    #[arg(long = "reg", default_value_t = 1e-3)]
    pub reg: f64,
    #[arg(long = "no-standardize")]
    pub no_standardize: bool,
    /// Number of score thresholds used by the pointwise baselines.
    #[arg(long, default_value_t = 25)]
    pub thresholds: usize,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

impl MethodArgs {
    pub fn detector_config(&self) -> Result<DetectorConfig> {
        let method: Method = self.method.parse()?;
        let cov_mode: CovarianceMode = self.cov.parse()?;
        let config = DetectorConfig {
            method,
            scan: ScanConfig {
                min_length: self.min_len,
                max_length: self.max_len,
                top_m: self.top,
                method: if method == Method::MdiKde {
                    ScanMethod::MdiKde
                } else {
                    ScanMethod::MdiGaussian
                },
                cov_mode,
                embedding_k: self.embed,
                kde_bandwidth: self.bandwidth,
                regularization: self.reg,
            },
            standardize: !self.no_standardize,
            num_thresholds: self.thresholds,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long, conflicts_with = "dataset", required_unless_present = "dataset")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Output path; detections go to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "250,500,1000,2000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub dims: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[command(flatten)]
    pub method: MethodArgs,
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(f)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => io::write_atomic(path, text.as_bytes()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.write_all(b"\n")?;
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { seed, out } => {
            let instances = generate_dataset(seed)?;
            io::write_dataset(&out, &Dataset { seed, instances })
        }
        Command::Detect(args) => run_detect(&args),
        Command::Evaluate {
            dataset,
            detections,
            iou,
            out,
            pr_out,
        } => {
            let dataset = io::read_dataset(&dataset)?;
            let dets = io::read_detections(&detections)?;
            let report = evaluate_dataset(&dataset.instances, &dets, None, iou)?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Schema(e.to_string()))?;
            if let Some(path) = pr_out {
                io::write_atomic(&path, report.pr_curve_text().as_bytes())?;
            }
            emit(out.as_deref(), &json)
        }
        Command::Bench(args) => run_bench(&args),
    }
}

fn run_detect(args: &DetectArgs) -> Result<()> {
    let config = args.method.detector_config()?;
    let tagged: Vec<InstanceDetection> = if let Some(path) = &args.dataset {
        let dataset = io::read_dataset(path)?;
        let outputs = with_workers(args.method.workers, || detect_dataset(&dataset.instances, &config))?;
        tag_detections(&dataset.instances, &outputs)
    } else {
        let path = args.input.as_ref().expect("clap enforces --input or --dataset");
        let series = io::read_csv(path)?;
        let output = with_workers(args.method.workers, || run_detector(&series, &config))?;
        output
            .detections
            .into_iter()
            .map(|d| InstanceDetection::new("input", d))
            .collect()
    };
    emit(args.out.as_deref(), &io::detections_to_json(&tagged)?)
}

fn run_bench(args: &BenchArgs) -> Result<()> {
    let config = args.method.detector_config()?;
    let scan_config = config.scan.clone();
    println!(
        "{:>8} {:>14} {:>12} {:>12} {:>12} {:>12}",
        "n", "method", "candidates", "build_s", "scan_s", "total_s"
    );
    with_workers(args.method.workers, || {
        for &n in &args.sizes {
            let raw = sample_gp(n, args.dims, 1.0, args.seed)?;
            let series = standardize(&raw);
            let embedded = embed(&series, scan_config.embedding_k)?;
            let t0 = Instant::now();
            match scan_config.method {
                ScanMethod::MdiKde => {
                    build_cumulative_kernel(&embedded, scan_config.kde_bandwidth)?;
                }
                ScanMethod::MdiGaussian => {
                    build_gaussian_cumulants(&embedded);
                }
            }
            let build = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let candidates = scan(&series, &scan_config)?;
            let total = t1.elapsed().as_secs_f64();
            println!(
                "{:>8} {:>14} {:>12} {:>12.4} {:>12.4} {:>12.4}",
                n,
                scan_config.method.to_string(),
                candidates.len(),
                build,
                (total - build).max(0.0),
                total
            );
        }
        Ok(())
    })
}
