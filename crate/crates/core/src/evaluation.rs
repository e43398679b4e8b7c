//! Detection-style evaluation (IoU matching, precision-recall, AP) and pointwise ROC AUC.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::baselines::PointScores;
use crate::error::{Error, Result};
use crate::series::{Detection, Interval};

/// Intersection over union of two index sets.
pub fn iou(a: &Interval, b: &Interval) -> f64 {
    let inter = a.intersection_len(b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

/// A detection tagged with the instance it was produced for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDetection {
    pub instance: String,
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

impl InstanceDetection {
    pub fn new(instance: impl Into<String>, detection: Detection) -> Self {
        Self {
            instance: instance.into(),
            start: detection.interval.start,
            end: detection.interval.end,
            score: detection.score,
        }
    }

    pub fn interval(&self) -> Interval {
        Interval {
            start: self.start,
            end: self.end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    /// Index into the detection list passed to [`average_precision`].
    pub detection: usize,
    pub instance: String,
    /// Index into that instance's ground-truth list.
    pub ground_truth: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub ap: f64,
    /// `(recall, precision)` after each ranked detection.
    pub pr_curve: Vec<(f64, f64)>,
    pub matches: Vec<Match>,
    pub num_ground_truth: usize,
}

/// Average precision over detections pooled across instances.
///
/// A detection is a true positive when its IoU with a still-unmatched ground truth of the same
/// instance exceeds `beta`; the highest-IoU candidate is taken. AP is the mean over ground truths
/// of the precision at the rank where each was matched (unmatched ones contribute zero).
pub fn average_precision(
    detections: &[InstanceDetection],
    ground_truth: &HashMap<String, Vec<Interval>>,
    beta: f64,
) -> Result<PrecisionRecall> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid(format!("IoU threshold must lie in (0, 1], got {beta}")));
    }
    let total: usize = ground_truth.values().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::invalid("no ground-truth intervals: recall is undefined"));
    }
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        let (da, db) = (&detections[a], &detections[b]);
        db.score
            .total_cmp(&da.score)
            .then_with(|| da.instance.cmp(&db.instance))
            .then(da.start.cmp(&db.start))
            .then(da.end.cmp(&db.end))
    });

    let mut used: HashMap<&str, Vec<bool>> = ground_truth
        .iter()
        .map(|(k, v)| (k.as_str(), vec![false; v.len()]))
        .collect();
    let mut tp = 0usize;
    let mut ap = 0.0;
    let mut pr_curve = Vec::with_capacity(order.len());
    let mut matches = Vec::new();
    for (rank, &idx) in order.iter().enumerate() {
        let det = &detections[idx];
        let iv = det.interval();
        let best = ground_truth.get(&det.instance).and_then(|gts| {
            let flags = &used[det.instance.as_str()];
            gts.iter()
                .enumerate()
                .filter(|(g, _)| !flags[*g])
                .map(|(g, gt)| (g, iou(&iv, gt)))
                .filter(|(_, o)| *o > beta)
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        });
        if let Some((g, overlap)) = best {
            used.get_mut(det.instance.as_str()).expect("instance present")[g] = true;
            tp += 1;
            ap += tp as f64 / (rank + 1) as f64;
            matches.push(Match {
                detection: idx,
                instance: det.instance.clone(),
                ground_truth: g,
                iou: overlap,
            });
        }
        pr_curve.push((tp as f64 / total as f64, tp as f64 / (rank + 1) as f64));
    }
    Ok(PrecisionRecall {
        ap: ap / total as f64,
        pr_curve,
        matches,
        num_ground_truth: total,
    })
}

/// ROC AUC in Mann-Whitney form; a point is positive iff it lies in some ground-truth interval.
pub fn auc(point_scores: &PointScores, ground_truth: &[Interval]) -> Result<f64> {
    let labels: Vec<bool> = (0..point_scores.len())
        .map(|t| ground_truth.iter().any(|g| g.contains(t)))
        .collect();
    let positives = labels.iter().filter(|l| **l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::invalid("AUC needs both positive and negative time steps"));
    }
    // average ranks handle ties with the half-credit convention
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| point_scores.scores[a].total_cmp(&point_scores.scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && point_scores.scores[order[j + 1]] == point_scores.scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&t| labels[t]).count() as f64 * avg_rank;
        i = j + 1;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// Pointwise scores from detections: the maximum score of any detection covering each step.
pub fn intervals_to_point_scores(detections: &[Detection], n: usize) -> PointScores {
    let mut scores = vec![0.0f64; n];
    for d in detections {
        for s in &mut scores[d.interval.start.min(n)..d.interval.end.min(n)] {
            *s = s.max(d.score);
        }
    }
    PointScores::new(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(s: usize, e: usize) -> Interval {
        Interval::new(s, e).unwrap()
    }

    fn gt(pairs: &[(&str, Interval)]) -> HashMap<String, Vec<Interval>> {
        let mut m: HashMap<String, Vec<Interval>> = HashMap::new();
        for (k, v) in pairs {
            m.entry(k.to_string()).or_default().push(*v);
        }
        m
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&iv(10, 20), &iv(10, 20)), 1.0);
        assert!((iou(&iv(0, 10), &iv(5, 15)) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou(&iv(0, 10), &iv(10, 20)), 0.0);
    }

    #[test]
    fn exact_detection_gives_full_ap() {
        let truth = gt(&[("a", iv(3, 9))]);
        let dets = [InstanceDetection::new("a", Detection::new(iv(3, 9), 0.2))];
        let pr = average_precision(&dets, &truth, 0.5).unwrap();
        assert_eq!(pr.ap, 1.0);
        assert_eq!(pr.matches.len(), 1);
    }

    #[test]
    fn false_positive_first_halves_ap() {
        let truth = gt(&[("a", iv(3, 9))]);
        let dets = [
            InstanceDetection::new("a", Detection::new(iv(20, 30), 2.0)),
            InstanceDetection::new("a", Detection::new(iv(3, 9), 1.0)),
        ];
        let pr = average_precision(&dets, &truth, 0.5).unwrap();
        assert!((pr.ap - 0.5).abs() < 1e-12);
        assert_eq!(pr.pr_curve, vec![(0.0, 0.0), (1.0, 0.5)]);
    }

    #[test]
    fn iou_threshold_is_strict() {
        let truth = gt(&[("a", iv(0, 10))]);
        // IoU exactly 0.5
        let dets = [InstanceDetection::new("a", Detection::new(iv(0, 5), 1.0))];
        assert_eq!(average_precision(&dets, &truth, 0.5).unwrap().ap, 0.0);
    }

    #[test]
    fn ground_truth_matched_once() {
        let truth = gt(&[("a", iv(0, 10))]);
        let dets = [
            InstanceDetection::new("a", Detection::new(iv(0, 10), 2.0)),
            InstanceDetection::new("a", Detection::new(iv(1, 10), 1.0)),
        ];
        let pr = average_precision(&dets, &truth, 0.5).unwrap();
        assert_eq!(pr.matches.len(), 1);
        assert_eq!(pr.ap, 1.0);
    }

    #[test]
    fn detections_only_match_their_instance() {
        let truth = gt(&[("a", iv(0, 10)), ("b", iv(50, 60))]);
        let dets = [InstanceDetection::new("b", Detection::new(iv(0, 10), 1.0))];
        assert_eq!(average_precision(&dets, &truth, 0.5).unwrap().ap, 0.0);
    }

    #[test]
    fn empty_ground_truth_is_an_error() {
        assert!(average_precision(&[], &HashMap::new(), 0.5).is_err());
    }

    #[test]
    fn auc_examples() {
        let truth = [iv(2, 4)];
        let perfect = PointScores::new(vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(auc(&perfect, &truth).unwrap(), 1.0);
        let flat = PointScores::new(vec![3.0; 4]);
        assert_eq!(auc(&flat, &truth).unwrap(), 0.5);
        let swapped = PointScores::new(vec![1.0, 3.0, 2.0, 4.0]);
        assert!((auc(&swapped, &truth).unwrap() - 0.75).abs() < 1e-12);
        assert!(auc(&perfect, &[iv(0, 4)]).is_err());
    }

    #[test]
    fn point_scores_from_intervals() {
        let ps = intervals_to_point_scores(&[Detection::new(iv(5, 10), 3.0)], 12);
        assert_eq!(
            ps.scores,
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 3.0, 3.0, 3.0, 3.0, 3.0, 0.0, 0.0]
        );
        let ps = intervals_to_point_scores(&[Detection::new(iv(0, 4), 2.0), Detection::new(iv(2, 6), 5.0)], 6);
        assert_eq!(ps.scores, vec![2.0, 2.0, 5.0, 5.0, 5.0, 5.0]);
        assert_eq!(intervals_to_point_scores(&[], 3).scores, vec![0.0; 3]);
    }
}
