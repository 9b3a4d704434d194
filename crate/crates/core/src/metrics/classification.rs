use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub average_precision: f64,
}

/// Accuracy/precision/recall/F1 predicting positive when `score >= threshold`,
/// plus threshold-free average precision.
///
/// Panics if `scores` and `golds` differ in length.
pub fn classification_metrics(scores: &[f64], golds: &[bool], threshold: f64) -> ClassificationMetrics {
    assert_eq!(scores.len(), golds.len(), "scores and golds must align");
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (s, g) in scores.iter().zip(golds) {
        match (*s >= threshold, *g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    ClassificationMetrics {
        accuracy: ratio(tp + tn, scores.len()),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fneg),
        f1: ratio(2 * tp, 2 * tp + fp + fneg),
        average_precision: average_precision(scores, golds),
    }
}

/// Area under the precision-recall step function: the sum over distinct
/// score levels (descending) of the recall gained times the precision at
/// that level. Without ties this is the mean precision at each positive.
/// Returns 0 when there are no positives.
pub fn average_precision(scores: &[f64], golds: &[bool]) -> f64 {
    let positives = golds.iter().filter(|g| **g).count();
    if positives == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut ap = 0.0;
    let (mut seen, mut tp, mut prev_recall) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < order.len() {
        let level = scores[order[i]];
        while i < order.len() && scores[order[i]] == level {
            seen += 1;
            tp += usize::from(golds[order[i]]);
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        ap += (recall - prev_recall) * (tp as f64 / seen as f64);
        prev_recall = recall;
    }
    ap
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn separated() {
        let m = classification_metrics(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false], 0.5);
        assert_eq!((m.accuracy, m.f1, m.average_precision), (1.0, 1.0, 1.0));
    }

    #[test]
    fn predict_all_positive() {
        let golds = [true, false, true, true, false];
        let m = classification_metrics(&[0.3, 0.1, 0.9, 0.5, 0.0], &golds, 0.0);
        assert!((m.accuracy - 0.6).abs() < 1e-12);
        assert_eq!(m.recall, 1.0);
    }

    #[test]
    fn ap_by_brute_force() {
        let ap = average_precision(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]);
        assert!((ap - 0.5 * (1.0 + 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn ap_without_positives() {
        assert_eq!(average_precision(&[0.5, 0.2], &[false, false]), 0.0);
    }

    proptest! {
        #[test]
        fn ap_invariant_under_monotone_map(
            pairs in prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..40)
        ) {
            let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let golds: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            let a = average_precision(&scores, &golds);
            let b = average_precision(&mapped, &golds);
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
