use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::corpus::HumanLabels;
use super::EvaluatedRule;
use crate::metrics::{aggregate_human, normalize_label, pearson, CorrelationResult, StatsError};
use crate::pipeline::GeneratedRule;
use crate::tuning::binarize_gold;

/// Criterion recorded in reports for what makes a rule correct.
pub const CORRECTNESS_CRITERION: &str = "all_labels_positive";

/// A rule is correct when every aspect label is non-zero.
pub fn is_correct(labels: &HumanLabels) -> bool {
    [labels.consistent, labels.reality, labels.general, labels.nontrivial]
        .into_iter()
        .all(binarize_gold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanEval {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub consistent: f64,
    pub reality: f64,
    pub general: f64,
    pub nontrivial: f64,
    pub n_retained: usize,
    pub n_correct: usize,
    /// Unlabeled rules that were filtered out and so left out of recall.
    pub n_unlabeled: usize,
    /// Nothing was retained: precision and the aspect means are reported
    /// as 0.
    pub empty_retained: bool,
}

/// Precision and recall of the retained rules against human labels, plus
/// the mean normalized aspect labels of the retained rules. Prefiltered
/// rules are ignored.
pub fn human_eval(
    rules: &[GeneratedRule],
    labels: &BTreeMap<String, HumanLabels>,
) -> Result<HumanEval, HarnessError> {
    let pool: Vec<&GeneratedRule> = rules.iter().filter(|r| !r.prefiltered).collect();
    let missing: Vec<String> = pool
        .iter()
        .filter(|r| r.verdict && !labels.contains_key(&r.rule_id))
        .map(|r| r.rule_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(HarnessError::MissingLabels(missing));
    }
    let n_unlabeled = pool.iter().filter(|r| !labels.contains_key(&r.rule_id)).count();
    let labeled: Vec<(&GeneratedRule, &HumanLabels)> = pool
        .iter()
        .filter_map(|r| labels.get(&r.rule_id).map(|l| (*r, l)))
        .collect();

    let retained: Vec<&HumanLabels> = labeled.iter().filter(|(r, _)| r.verdict).map(|(_, l)| *l).collect();
    let n_correct = labeled.iter().filter(|(_, l)| is_correct(l)).count();
    let hits = retained.iter().filter(|l| is_correct(l)).count();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(hits, retained.len());
    let recall = ratio(hits, n_correct);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let mean = |f: fn(&HumanLabels) -> f64| {
        if retained.is_empty() {
            0.0
        } else {
            retained.iter().map(|l| f(l)).sum::<f64>() / retained.len() as f64
        }
    };
    Ok(HumanEval {
        precision,
        recall,
        f1,
        consistent: mean(|l| normalize_label(l.consistent, 2)),
        reality: mean(|l| normalize_label(l.reality, 2)),
        general: mean(|l| normalize_label(l.general, 2)),
        nontrivial: mean(|l| normalize_label(l.nontrivial, 1)),
        n_retained: retained.len(),
        n_correct,
        n_unlabeled,
        empty_retained: retained.is_empty(),
    })
}

/// Per labelled rule: METEOR, BLEU and the aggregated human score, for
/// correlation studies. Unlabelled rules are skipped.
pub fn aggregate_inputs(
    rules: &[EvaluatedRule],
    labels: &BTreeMap<String, HumanLabels>,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut out = (Vec::new(), Vec::new(), Vec::new());
    for r in rules {
        if let Some(l) = labels.get(&r.rule.rule_id) {
            out.0.push(r.meteor);
            out.1.push(r.bleu);
            out.2.push(aggregate_human(l));
        }
    }
    out
}

/// Pearson correlation between an automatic metric and human scores.
pub fn correlate(metric_scores: &[f64], human_scores: &[f64]) -> Result<CorrelationResult, StatsError> {
    pearson(metric_scores, human_scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(id: &str, verdict: bool) -> GeneratedRule {
        GeneratedRule {
            rule_id: id.into(),
            verdict,
            ..Default::default()
        }
    }

    fn labels(entries: &[(&str, [u8; 4])]) -> BTreeMap<String, HumanLabels> {
        entries
            .iter()
            .map(|(id, [c, r, g, t])| (id.to_string(), HumanLabels::new(*c, *r, *g, *t).unwrap()))
            .collect()
    }

    #[test]
    fn retain_all_has_full_recall() {
        let rules = vec![rule("a", true), rule("b", true), rule("c", true)];
        let l = labels(&[("a", [2, 2, 2, 1]), ("b", [0, 2, 2, 1]), ("c", [1, 1, 1, 1])]);
        let e = human_eval(&rules, &l).unwrap();
        assert_eq!(e.recall, 1.0);
        assert!((e.precision - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn all_true_labels() {
        let rules = vec![rule("a", true), rule("b", true), rule("c", true)];
        let l = labels(&[("a", [2, 2, 2, 1]), ("b", [2, 2, 2, 1]), ("c", [2, 2, 2, 1])]);
        let e = human_eval(&rules, &l).unwrap();
        assert_eq!((e.precision, e.consistent, e.reality, e.general, e.nontrivial), (1.0, 1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn three_rule_example() {
        // a: kept, correct. b: kept, wrong. c: dropped, correct.
        let rules = vec![rule("a", true), rule("b", true), rule("c", false)];
        let l = labels(&[("a", [2, 1, 2, 1]), ("b", [2, 2, 2, 0]), ("c", [1, 1, 1, 1])]);
        let e = human_eval(&rules, &l).unwrap();
        assert_eq!((e.precision, e.recall, e.f1), (0.5, 0.5, 0.5));
        assert_eq!(e.reality, 0.75);
        assert_eq!(e.nontrivial, 0.5);

        let none = vec![rule("a", false), rule("b", false), rule("c", false)];
        let e = human_eval(&none, &l).unwrap();
        assert!(e.empty_retained);
        assert_eq!((e.precision, e.recall, e.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn unlabeled_retained_rules_are_listed() {
        let rules = vec![rule("a", true), rule("b", true), rule("c", false)];
        let l = labels(&[("a", [2, 2, 2, 1])]);
        match human_eval(&rules, &l) {
            Err(HarnessError::MissingLabels(ids)) => assert_eq!(ids, vec!["b".to_string()]),
            other => panic!("{other:?}"),
        }
        let e = human_eval(&rules[..1].iter().cloned().chain([rule("c", false)]).collect::<Vec<_>>(), &l).unwrap();
        assert_eq!(e.n_unlabeled, 1);
    }

    #[test]
    fn correlate_checks_lengths() {
        assert!(correlate(&[1.0, 2.0], &[1.0]).is_err());
        assert!((correlate(&[1.0, 2.0, 3.0], &[6.0, 4.0, 5.0]).unwrap().r + 0.5).abs() < 1e-12);
    }
}
