//! Greedy detection matching and all-point interpolated average precision.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{CullError, Result};
use crate::model::{iou, Detection, FrameDetections};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    /// `(prediction index, ground-truth index, iou)` in processing order.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_predictions: Vec<usize>,
    pub unmatched_groundtruths: Vec<usize>,
}

/// Prediction indices by score descending, ties by input index.
fn score_order(predictions: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| {
        predictions[b]
            .score
            .total_cmp(&predictions[a].score)
            .then(a.cmp(&b))
    });
    order
}

/// Greedy matching: each prediction, in score order, takes the free
/// same-class ground truth with the highest IoU at or above the threshold.
pub fn match_greedy(
    predictions: &[Detection],
    groundtruths: &[Detection],
    iou_threshold: f64,
) -> MatchResult {
    let mut taken = vec![false; groundtruths.len()];
    let mut result = MatchResult::default();
    for p in score_order(predictions) {
        let pred = &predictions[p];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in groundtruths.iter().enumerate() {
            if taken[g] || gt.class_id != pred.class_id {
                continue;
            }
            let overlap = iou(&pred.bbox, &gt.bbox);
            if overlap >= iou_threshold && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((g, overlap));
            }
        }
        match best {
            Some((g, overlap)) => {
                taken[g] = true;
                result.pairs.push((p, g, overlap));
            }
            None => result.unmatched_predictions.push(p),
        }
    }
    result.unmatched_predictions.sort_unstable();
    result.unmatched_groundtruths = (0..groundtruths.len()).filter(|&g| !taken[g]).collect();
    result
}

/// AP from a ranked TP/FP sequence over `n_groundtruths` objects.
///
/// Each true positive contributes `1 / n_groundtruths` of recall at the
/// interpolated precision `max_{j >= i} precision(j)`.
pub fn ap_from_ranked(hits: &[bool], n_groundtruths: usize) -> f64 {
    if n_groundtruths == 0 {
        return if hits.is_empty() { 1.0 } else { 0.0 };
    }
    let mut tp = 0usize;
    let precision: Vec<f64> = hits
        .iter()
        .enumerate()
        .map(|(i, &hit)| {
            if hit {
                tp += 1;
            }
            tp as f64 / (i + 1) as f64
        })
        .collect();
    let mut envelope = precision;
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let area: f64 = hits
        .iter()
        .zip(&envelope)
        .filter(|(hit, _)| **hit)
        .map(|(_, p)| *p)
        .sum();
    area / n_groundtruths as f64
}

/// All-point interpolated average precision of `predictions` against
/// `groundtruths`. Both empty counts as perfect.
pub fn average_precision(
    predictions: &[Detection],
    groundtruths: &[Detection],
    iou_threshold: f64,
) -> f64 {
    let matched = match_greedy(predictions, groundtruths, iou_threshold);
    let mut is_tp = vec![false; predictions.len()];
    for &(p, _, _) in &matched.pairs {
        is_tp[p] = true;
    }
    let hits: Vec<bool> = score_order(predictions)
        .into_iter()
        .map(|p| is_tp[p])
        .collect();
    ap_from_ranked(&hits, groundtruths.len())
}

/// Per-class AP over the classes present in the ground truth.
pub fn class_aps(
    predictions: &[Detection],
    groundtruths: &[Detection],
    iou_threshold: f64,
) -> Vec<(u32, f64)> {
    let classes: BTreeSet<u32> = groundtruths.iter().map(|d| d.class_id).collect();
    classes
        .into_iter()
        .map(|c| {
            let preds: Vec<Detection> = predictions
                .iter()
                .filter(|d| d.class_id == c)
                .copied()
                .collect();
            let gts: Vec<Detection> = groundtruths
                .iter()
                .filter(|d| d.class_id == c)
                .copied()
                .collect();
            (c, average_precision(&preds, &gts, iou_threshold))
        })
        .collect()
}

pub fn mean_ap(per_class_aps: &[(u32, f64)]) -> Result<f64> {
    if per_class_aps.is_empty() {
        return Err(CullError::EmptyClassSet);
    }
    let total: f64 = per_class_aps.iter().map(|(_, ap)| ap).sum();
    Ok(total / per_class_aps.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionDifficulty {
    pub frame_id: String,
    pub average_precision: f64,
    /// `(student, teacher)` detection counts.
    pub detection_counts: (usize, usize),
}

impl PrecisionDifficulty {
    /// Ranking difficulty, `1 - AP`.
    pub fn difficulty(&self) -> f64 {
        1.0 - self.average_precision
    }
}

/// AP of the student's detections with the teacher's taken as ground truth.
/// A single class-respecting AP is computed over the whole frame.
pub fn frame_precision_difficulty(
    student: &FrameDetections,
    teacher: &FrameDetections,
    iou_threshold: f64,
) -> Result<PrecisionDifficulty> {
    if student.frame_id != teacher.frame_id {
        return Err(CullError::FrameIdMismatch {
            student: student.frame_id.clone(),
            teacher: teacher.frame_id.clone(),
        });
    }
    Ok(PrecisionDifficulty {
        frame_id: student.frame_id.clone(),
        average_precision: average_precision(
            &student.detections,
            &teacher.detections,
            iou_threshold,
        ),
        detection_counts: (student.detections.len(), teacher.detections.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundingBox, Source};

    fn det(class_id: u32, x: f64, y: f64, w: f64, h: f64, score: f64) -> Detection {
        Detection::new(class_id, BoundingBox::new(x, y, w, h).unwrap(), score).unwrap()
    }

    #[test]
    fn single_overlapping_pair_matches() {
        // IoU of (0,0,10,10) and (2.5,0,10,10) is 75 / 125 = 0.6
        let preds = [det(0, 2.5, 0.0, 10.0, 10.0, 0.9)];
        let gts = [det(0, 0.0, 0.0, 10.0, 10.0, 1.0)];
        let m = match_greedy(&preds, &gts, 0.5);
        assert_eq!(m.pairs.len(), 1);
        assert!((m.pairs[0].2 - 0.6).abs() < 1e-12);
        assert!(m.unmatched_predictions.is_empty());
        assert!(m.unmatched_groundtruths.is_empty());
    }

    #[test]
    fn disjoint_pair_stays_unmatched() {
        let preds = [det(0, 50.0, 50.0, 10.0, 10.0, 0.9)];
        let gts = [det(0, 0.0, 0.0, 10.0, 10.0, 1.0)];
        let m = match_greedy(&preds, &gts, 0.5);
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_predictions, vec![0]);
        assert_eq!(m.unmatched_groundtruths, vec![0]);
        assert_eq!(average_precision(&preds, &gts, 0.5), 0.0);
    }

    #[test]
    fn higher_score_wins_contested_groundtruth() {
        // Both at IoU 0.7 would require (10-d)/(10+d) = 0.7, d = 30/17.
        let d = 30.0 / 17.0;
        let preds = [
            det(0, d, 0.0, 10.0, 10.0, 0.8),
            det(0, -d, 0.0, 10.0, 10.0, 0.9),
        ];
        let gts = [det(0, 0.0, 0.0, 10.0, 10.0, 1.0)];
        let m = match_greedy(&preds, &gts, 0.5);
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].0, 1);
        assert!((m.pairs[0].2 - 0.7).abs() < 1e-12);
        assert_eq!(m.unmatched_predictions, vec![0]);
    }

    #[test]
    fn classes_never_cross_match() {
        let preds = [det(1, 0.0, 0.0, 10.0, 10.0, 0.9)];
        let gts = [det(0, 0.0, 0.0, 10.0, 10.0, 1.0)];
        assert!(match_greedy(&preds, &gts, 0.5).pairs.is_empty());
    }

    #[test]
    fn ap_edge_conventions() {
        let g = [det(0, 0.0, 0.0, 10.0, 10.0, 1.0)];
        assert_eq!(average_precision(&[], &[], 0.5), 1.0);
        assert_eq!(average_precision(&g, &[], 0.5), 0.0);
        assert_eq!(average_precision(&[], &g, 0.5), 0.0);
        assert_eq!(average_precision(&g, &g, 0.5), 1.0);
    }

    #[test]
    fn ap_of_tp_fp_tp_sequence() {
        let gts = [
            det(0, 0.0, 0.0, 10.0, 10.0, 1.0),
            det(0, 100.0, 0.0, 10.0, 10.0, 1.0),
        ];
        let preds = [
            det(0, 0.0, 0.0, 10.0, 10.0, 0.9),
            det(0, 300.0, 0.0, 10.0, 10.0, 0.8),
            det(0, 100.0, 0.0, 10.0, 10.0, 0.7),
        ];
        let ap = average_precision(&preds, &gts, 0.5);
        assert!((ap - (0.5 * 1.0 + 0.5 * (2.0 / 3.0))).abs() < 1e-12);
    }

    #[test]
    fn mean_ap_is_plain_mean() {
        assert_eq!(mean_ap(&[(0, 1.0)]).unwrap(), 1.0);
        assert_eq!(mean_ap(&[(0, 1.0), (1, 0.0)]).unwrap(), 0.5);
        assert!(matches!(mean_ap(&[]), Err(CullError::EmptyClassSet)));
    }

    #[test]
    fn class_aps_cover_groundtruth_classes() {
        let gts = [
            det(0, 0.0, 0.0, 10.0, 10.0, 1.0),
            det(2, 100.0, 0.0, 10.0, 10.0, 1.0),
        ];
        let preds = [
            det(0, 0.0, 0.0, 10.0, 10.0, 0.9),
            det(1, 0.0, 0.0, 10.0, 10.0, 0.9),
        ];
        assert_eq!(class_aps(&preds, &gts, 0.5), vec![(0, 1.0), (2, 0.0)]);
    }

    #[test]
    fn frame_precision_conventions() {
        let objects = vec![
            det(0, 0.0, 0.0, 10.0, 10.0, 0.99),
            det(1, 100.0, 0.0, 10.0, 10.0, 0.97),
        ];
        let teacher =
            FrameDetections::new("f", Source::Teacher, 1.0).with_detections(objects.clone());
        let same = FrameDetections::new("f", Source::Student, 1.0).with_detections(objects);
        let pd = frame_precision_difficulty(&same, &teacher, 0.5).unwrap();
        assert_eq!(pd.average_precision, 1.0);
        assert_eq!(pd.difficulty(), 0.0);
        assert_eq!(pd.detection_counts, (2, 2));

        let empty = FrameDetections::new("f", Source::Student, 1.0);
        let pd = frame_precision_difficulty(&empty, &teacher, 0.5).unwrap();
        assert_eq!(pd.difficulty(), 1.0);

        let empty_teacher = FrameDetections::new("f", Source::Teacher, 1.0);
        let pd = frame_precision_difficulty(&empty, &empty_teacher, 0.5).unwrap();
        assert_eq!(pd.average_precision, 1.0);
        assert_eq!(pd.difficulty(), 0.0);

        let other = FrameDetections::new("g", Source::Teacher, 1.0);
        assert!(matches!(
            frame_precision_difficulty(&empty, &other, 0.5),
            Err(CullError::FrameIdMismatch { .. })
        ));
    }
}
