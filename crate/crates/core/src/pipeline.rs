//! End-to-end detection with any method and evaluation over benchmark groups.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{hotelling_t2, pointwise_kde, scores_to_intervals, GroupingConfig, PointScores};
use crate::error::{Error, Result};
use crate::evaluation::{auc, average_precision, intervals_to_point_scores, InstanceDetection, Match};
use crate::scanner::{detect, ScanConfig, ScanMethod};
use crate::series::{standardize, Detection, Interval, TimeSeries};
use crate::synthesis::{DatasetInstance, InstanceGroup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MdiGaussian,
    MdiKde,
    Hotelling,
    PointwiseKde,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::MdiGaussian => "mdi-gaussian",
            Method::MdiKde => "mdi-kde",
            Method::Hotelling => "hotelling",
            Method::PointwiseKde => "pointwise-kde",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mdi-gaussian" => Ok(Method::MdiGaussian),
            "mdi-kde" => Ok(Method::MdiKde),
            "hotelling" => Ok(Method::Hotelling),
            "pointwise-kde" => Ok(Method::PointwiseKde),
            other => Err(Error::invalid(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub method: Method,
    /// Interval search settings; also supplies `k`, `top_m`, bandwidth and regularization
    /// for the baselines.
    pub scan: ScanConfig,
    pub standardize: bool,
    pub num_thresholds: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            method: Method::MdiGaussian,
            scan: ScanConfig::default(),
            standardize: true,
            num_thresholds: 25,
        }
    }
}

impl DetectorConfig {
    pub fn new(method: Method, scan: ScanConfig) -> Self {
        Self {
            method,
            scan,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scan.validate()?;
        if self.num_thresholds == 0 {
            return Err(Error::invalid("number of thresholds must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutput {
    /// Top-m disjoint detections on the original time axis.
    pub detections: Vec<Detection>,
    /// Pointwise scores: raw baseline scores, or the detections spread over time for MDI.
    pub point_scores: PointScores,
}

pub fn run_detector(series: &TimeSeries, config: &DetectorConfig) -> Result<MethodOutput> {
    config.validate()?;
    let prepared;
    let series = if config.standardize {
        prepared = standardize(series);
        &prepared
    } else {
        series
    };
    let scan = &config.scan;
    match config.method {
        Method::MdiGaussian | Method::MdiKde => {
            let scan = ScanConfig {
                method: if config.method == Method::MdiKde {
                    ScanMethod::MdiKde
                } else {
                    ScanMethod::MdiGaussian
                },
                ..scan.clone()
            };
            let detections = detect(series, &scan)?;
            let point_scores = intervals_to_point_scores(&detections, series.len());
            Ok(MethodOutput {
                detections,
                point_scores,
            })
        }
        Method::Hotelling | Method::PointwiseKde => {
            let point_scores = if config.method == Method::Hotelling {
                hotelling_t2(series, scan.embedding_k, scan.regularization)?
            } else {
                pointwise_kde(series, scan.embedding_k, scan.kde_bandwidth)?
            };
            let grouping = GroupingConfig {
                num_thresholds: config.num_thresholds,
                top_m: scan.top_m,
                length_bounds: None,
            };
            let detections = scores_to_intervals(&point_scores, &grouping)?;
            Ok(MethodOutput {
                detections,
                point_scores,
            })
        }
    }
}

/// Runs a detector on every instance (in parallel on the current rayon pool) and returns
/// the outputs in instance order.
pub fn detect_dataset(instances: &[DatasetInstance], config: &DetectorConfig) -> Result<Vec<MethodOutput>> {
    instances
        .par_iter()
        .map(|inst| run_detector(&inst.series, config))
        .collect()
}

pub fn tag_detections(instances: &[DatasetInstance], outputs: &[MethodOutput]) -> Vec<InstanceDetection> {
    instances
        .iter()
        .zip(outputs)
        .flat_map(|(inst, out)| {
            out.detections
                .iter()
                .map(|d| InstanceDetection::new(inst.id.clone(), *d))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: String,
    pub ap: f64,
    /// Mean of per-instance AUCs.
    pub auc: f64,
    pub num_instances: usize,
    pub num_detections: usize,
    pub pr_curve: Vec<(f64, f64)>,
    pub matches: Vec<Match>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub iou: f64,
    pub groups: Vec<GroupReport>,
}

impl EvaluationReport {
    pub fn group(&self, name: &str) -> Option<&GroupReport> {
        self.groups.iter().find(|g| g.group == name)
    }

    /// Two-column `recall precision` text, one block per group.
    pub fn pr_curve_text(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            out.push_str(&format!("# group {} AP {:.6}\n# recall precision\n", g.group, g.ap));
            for (r, p) in &g.pr_curve {
                out.push_str(&format!("{r:.6} {p:.6}\n"));
            }
            out.push('\n');
        }
        out
    }
}

/// AP and AUC per benchmark group.
///
/// Point scores for AUC are taken from `point_scores` when given (keyed by instance id) and
/// otherwise derived from the detections.
pub fn evaluate_dataset(
    instances: &[DatasetInstance],
    detections: &[InstanceDetection],
    point_scores: Option<&HashMap<String, PointScores>>,
    beta: f64,
) -> Result<EvaluationReport> {
    let mut group_order: Vec<InstanceGroup> = Vec::new();
    for inst in instances {
        if !group_order.contains(&inst.group) {
            group_order.push(inst.group);
        }
    }
    let mut by_instance: HashMap<&str, Vec<Detection>> = HashMap::new();
    for d in detections {
        by_instance
            .entry(d.instance.as_str())
            .or_default()
            .push(Detection::new(d.interval(), d.score));
    }
    if let Some(unknown) = detections
        .iter()
        .find(|d| !instances.iter().any(|i| i.id == d.instance))
    {
        return Err(Error::Schema(format!(
            "detection refers to unknown instance '{}'",
            unknown.instance
        )));
    }

    let mut groups = Vec::with_capacity(group_order.len());
    for group in group_order {
        let members: Vec<&DatasetInstance> = instances.iter().filter(|i| i.group == group).collect();
        let truth: HashMap<String, Vec<Interval>> =
            members.iter().map(|i| (i.id.clone(), i.ground_truth.clone())).collect();
        let group_dets: Vec<InstanceDetection> = detections
            .iter()
            .filter(|d| truth.contains_key(&d.instance))
            .cloned()
            .collect();
        let pr = average_precision(&group_dets, &truth, beta)?;

        let mut auc_sum = 0.0;
        for inst in &members {
            let derived;
            let scores = match point_scores.and_then(|m| m.get(&inst.id)) {
                Some(s) => s,
                None => {
                    let dets = by_instance.get(inst.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
                    derived = intervals_to_point_scores(dets, inst.series.len());
                    &derived
                }
            };
            auc_sum += auc(scores, &inst.ground_truth)?;
        }
        groups.push(GroupReport {
            group: group.name(),
            ap: pr.ap,
            auc: auc_sum / members.len() as f64,
            num_instances: members.len(),
            num_detections: group_dets.len(),
            pr_curve: pr.pr_curve,
            matches: pr.matches,
        });
    }
    Ok(EvaluationReport { iou: beta, groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{generate_dataset_with, AnomalyType, GeneratorConfig};

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::MdiGaussian,
            Method::MdiKde,
            Method::Hotelling,
            Method::PointwiseKde,
        ] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("svm".parse::<Method>().is_err());
    }

    #[test]
    fn every_method_returns_disjoint_top_m() {
        let ds = generate_dataset_with(
            5,
            &GeneratorConfig {
                instances_per_group: 1,
                groups: vec![InstanceGroup::multi(AnomalyType::MeanShift)],
                ..GeneratorConfig::default()
            },
        )
        .unwrap();
        for method in [
            Method::MdiGaussian,
            Method::MdiKde,
            Method::Hotelling,
            Method::PointwiseKde,
        ] {
            let out = run_detector(&ds[0].series, &DetectorConfig::new(method, ScanConfig::default())).unwrap();
            assert!(out.detections.len() <= 5 && !out.detections.is_empty());
            assert_eq!(out.point_scores.len(), 250);
            for (i, a) in out.detections.iter().enumerate() {
                for b in &out.detections[i + 1..] {
                    assert!(!a.interval.overlaps(&b.interval));
                }
            }
        }
    }

    #[test]
    fn evaluation_covers_each_group() {
        let ds = generate_dataset_with(
            2,
            &GeneratorConfig {
                instances_per_group: 3,
                groups: vec![
                    InstanceGroup::uni(AnomalyType::MeanShift),
                    InstanceGroup::uni(AnomalyType::AmplitudeChange),
                ],
                ..GeneratorConfig::default()
            },
        )
        .unwrap();
        let outputs = detect_dataset(&ds, &DetectorConfig::default()).unwrap();
        let dets = tag_detections(&ds, &outputs);
        let report = evaluate_dataset(&ds, &dets, None, 0.5).unwrap();
        assert_eq!(report.groups.len(), 2);
        assert_eq!(report.groups[0].group, "MS");
        for g in &report.groups {
            assert!((0.0..=1.0).contains(&g.ap) && (0.0..=1.0).contains(&g.auc));
            assert!(g.pr_curve.windows(2).all(|w| w[0].0 <= w[1].0));
        }
    }
}
