//! Runs every method on the synthetic benchmark and prints AP / AUC tables.
//!
//! `cargo run --release --example benchmark_table -- [seed] [lengthscale]`

use std::collections::HashMap;

use mdi::divergence::CovarianceMode;
use mdi::pipeline::{detect_dataset, evaluate_dataset, tag_detections, DetectorConfig, Method};
use mdi::scanner::ScanConfig;
use mdi::synthesis::{generate_dataset, generate_dataset_with, GeneratorConfig, InstanceGroup};

fn main() -> mdi::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let dataset = match std::env::args().nth(2).and_then(|s| s.parse::<f64>().ok()) {
        Some(lengthscale) => {
            let mut config = GeneratorConfig::default();
            config.params.lengthscale = lengthscale;
            config.params.fc_lengthscale *= lengthscale;
            generate_dataset_with(seed, &config)?
        }
        None => generate_dataset(seed)?,
    };
    let methods = [
        ("Hotelling's T^2 (pointwise)", Method::Hotelling, CovarianceMode::Full),
        ("KDE (pointwise)", Method::PointwiseKde, CovarianceMode::Full),
        ("MDI KDE", Method::MdiKde, CovarianceMode::Full),
        ("MDI Gaussian (full cov.)", Method::MdiGaussian, CovarianceMode::Full),
        ("MDI Gaussian (no cov.)", Method::MdiGaussian, CovarianceMode::Identity),
        (
            "MDI Gaussian (shared cov.)",
            Method::MdiGaussian,
            CovarianceMode::Shared,
        ),
    ];
    let header: Vec<String> = InstanceGroup::ALL.iter().map(InstanceGroup::name).collect();
    let mut ap_rows = Vec::new();
    let mut auc_rows = Vec::new();
    for (label, method, cov) in methods {
        let config = DetectorConfig::new(method, ScanConfig::gaussian(cov));
        let outputs = detect_dataset(&dataset, &config)?;
        let dets = tag_detections(&dataset, &outputs);
        let scores: HashMap<String, _> = dataset
            .iter()
            .zip(&outputs)
            .map(|(inst, out)| (inst.id.clone(), out.point_scores.clone()))
            .collect();
        let report = evaluate_dataset(&dataset, &dets, Some(&scores), 0.5)?;
        ap_rows.push((label, report.groups.iter().map(|g| g.ap).collect::<Vec<_>>()));
        auc_rows.push((label, report.groups.iter().map(|g| g.auc).collect::<Vec<_>>()));
    }
    for (title, rows) in [("AP", &ap_rows), ("AUC", &auc_rows)] {
        print!("{:<30}", format!("Method/{title}"));
        for h in &header {
            print!("{h:>7}");
        }
        println!();
        for (label, values) in rows.iter() {
            print!("{label:<30}");
            for v in values {
                print!("{v:>7.2}");
            }
            println!();
        }
        println!();
    }
    Ok(())
}
