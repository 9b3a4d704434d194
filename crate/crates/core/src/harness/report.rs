use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::human::{human_eval, HumanEval, CORRECTNESS_CRITERION};
use super::{HarnessError, System};
use crate::corpus::{DeerRecord, FactVariant, HumanLabels, Specificity, Topic};
use crate::metrics::{bleu, green, meteor, wrecall, MeteorParams, ScoredRule};
use crate::pipeline::{GeneratedRule, ModuleId, ThresholdSet};
use crate::templates::RuleType;

/// A generated rule with its scores against the gold rule of its source
/// record.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedRule {
    pub rule: GeneratedRule,
    pub rule_type: RuleType,
    pub topic: Topic,
    pub specificity: Specificity,
    /// METEOR in [0, 1].
    pub meteor: f64,
    /// BLEU-4 in [0, 1].
    pub bleu: f64,
}

pub fn evaluate_rules(rules: &[GeneratedRule], deer: &[DeerRecord]) -> Result<Vec<EvaluatedRule>, HarnessError> {
    let by_id: BTreeMap<&str, &DeerRecord> = deer.iter().map(|r| (r.id.as_str(), r)).collect();
    let params = MeteorParams::default();
    rules
        .iter()
        .map(|rule| {
            let gold = by_id
                .get(rule.deer_id.as_str())
                .ok_or_else(|| HarnessError::UnknownRecord(rule.deer_id.clone()))?;
            Ok(EvaluatedRule {
                rule: rule.clone(),
                rule_type: gold.rule_type,
                topic: gold.topic,
                specificity: gold.fact_specificity,
                meteor: meteor(&rule.text, &gold.rule_text, &params),
                bleu: bleu(&rule.text, &[&gold.rule_text]),
            })
        })
        .collect()
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    /// `seed N` or `mean`.
    pub label: String,
    pub n_candidates: usize,
    pub n_prefiltered: usize,
    /// Candidates that reached verification.
    pub n_pool: usize,
    pub n_retained: usize,
    /// Mean METEOR of the retained rules, x100.
    pub meteor: f64,
    /// Mean BLEU-4 of the retained rules, x100.
    pub bleu: f64,
    /// `None` when fewer than ten rules reached verification.
    pub wrecall: Option<f64>,
    pub green: Option<f64>,
    pub human: Option<HumanEval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    pub n_records: usize,
    pub n_candidates: usize,
    pub n_pool: usize,
    pub n_retained: usize,
    pub meteor: f64,
    pub wrecall: Option<f64>,
    pub green: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakdownKey {
    RuleType,
    Topic,
    Variant,
    Specificity,
}

impl BreakdownKey {
    pub const ALL: [BreakdownKey; 4] = [
        BreakdownKey::RuleType,
        BreakdownKey::Topic,
        BreakdownKey::Variant,
        BreakdownKey::Specificity,
    ];

    fn group_of(self, r: &EvaluatedRule) -> String {
        match self {
            BreakdownKey::RuleType => r.rule_type.as_str().to_string(),
            BreakdownKey::Topic => r.topic.as_str().to_string(),
            BreakdownKey::Variant => r.rule.variant.map_or("unknown", FactVariant::as_str).to_string(),
            BreakdownKey::Specificity => match r.specificity {
                Specificity::Specific => "specific".into(),
                Specificity::General => "general".into(),
            },
        }
    }
}

impl std::str::FromStr for BreakdownKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rule_type" => Ok(BreakdownKey::RuleType),
            "topic" => Ok(BreakdownKey::Topic),
            "variant" => Ok(BreakdownKey::Variant),
            "specificity" => Ok(BreakdownKey::Specificity),
            _ => Err(format!("unknown breakdown key `{s}`")),
        }
    }
}

/// What was run, recorded alongside the numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub system: System,
    pub k: usize,
    pub variants: Vec<FactVariant>,
    pub active_modules: BTreeSet<ModuleId>,
    pub seeds: Vec<u64>,
    pub thresholds: Option<ThresholdSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub info: RunInfo,
    pub correctness_criterion: String,
    /// One row per seed, then the mean row.
    pub rows: Vec<RunRow>,
    pub breakdowns: BTreeMap<BreakdownKey, Vec<GroupRow>>,
    pub flags: Vec<String>,
}

fn mean_of(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn pool_wrecall(rules: &[&EvaluatedRule]) -> Option<f64> {
    let scored: Vec<ScoredRule> = rules
        .iter()
        .filter(|r| !r.rule.prefiltered)
        .map(|r| ScoredRule {
            rule_id: r.rule.rule_id.clone(),
            meteor: r.meteor,
            retained: r.rule.verdict,
        })
        .collect();
    wrecall(&scored).ok().map(|b| b.value)
}

/// Metrics over one rule set. METEOR and BLEU average the retained rules;
/// weighted recall ranks every rule that reached verification.
pub fn summarize(
    label: &str,
    rules: &[&EvaluatedRule],
    labels: Option<&BTreeMap<String, HumanLabels>>,
) -> Result<RunRow, HarnessError> {
    let retained: Vec<&&EvaluatedRule> = rules.iter().filter(|r| r.rule.verdict).collect();
    let meteor = 100.0 * mean_of(retained.iter().map(|r| r.meteor));
    let wrecall = pool_wrecall(rules);
    let human = match labels {
        Some(l) => {
            let plain: Vec<GeneratedRule> = rules.iter().map(|r| r.rule.clone()).collect();
            Some(human_eval(&plain, l)?)
        }
        None => None,
    };
    Ok(RunRow {
        label: label.to_string(),
        n_candidates: rules.len(),
        n_prefiltered: rules.iter().filter(|r| r.rule.prefiltered).count(),
        n_pool: rules.iter().filter(|r| !r.rule.prefiltered).count(),
        n_retained: retained.len(),
        meteor,
        bleu: 100.0 * mean_of(retained.iter().map(|r| r.bleu)),
        wrecall,
        green: wrecall.map(|w| green(meteor, w)),
        human,
    })
}

/// Averages seed rows. GREEN is recomputed from the mean METEOR and
/// weighted recall so the row stays internally consistent.
pub fn mean_row(rows: &[RunRow]) -> RunRow {
    let avg = |f: &dyn Fn(&RunRow) -> f64| mean_of(rows.iter().map(f));
    let avg_count = |f: &dyn Fn(&RunRow) -> usize| (avg(&|r| f(r) as f64)).round() as usize;
    let meteor = avg(&|r| r.meteor);
    let wrecall = rows
        .iter()
        .map(|r| r.wrecall)
        .collect::<Option<Vec<f64>>>()
        .filter(|v| !v.is_empty())
        .map(mean_of);
    let human = rows
        .iter()
        .map(|r| r.human.clone())
        .collect::<Option<Vec<HumanEval>>>()
        .filter(|v| !v.is_empty())
        .map(|hs| {
            let m = |f: fn(&HumanEval) -> f64| mean_of(hs.iter().map(f));
            let c = |f: fn(&HumanEval) -> usize| mean_of(hs.iter().map(|h| f(h) as f64)).round() as usize;
            HumanEval {
                precision: m(|h| h.precision),
                recall: m(|h| h.recall),
                f1: m(|h| h.f1),
                consistent: m(|h| h.consistent),
                reality: m(|h| h.reality),
                general: m(|h| h.general),
                nontrivial: m(|h| h.nontrivial),
                n_retained: c(|h| h.n_retained),
                n_correct: c(|h| h.n_correct),
                n_unlabeled: c(|h| h.n_unlabeled),
                empty_retained: hs.iter().any(|h| h.empty_retained),
            }
        });
    RunRow {
        label: "mean".into(),
        n_candidates: avg_count(&|r| r.n_candidates),
        n_prefiltered: avg_count(&|r| r.n_prefiltered),
        n_pool: avg_count(&|r| r.n_pool),
        n_retained: avg_count(&|r| r.n_retained),
        meteor,
        bleu: avg(&|r| r.bleu),
        wrecall,
        green: wrecall.map(|w| green(meteor, w)),
        human,
    }
}

/// Groups the rules by `key`, pooling all seeds. Groups come out sorted by
/// name and partition the input.
pub fn breakdown(rules: &[EvaluatedRule], key: BreakdownKey) -> Vec<GroupRow> {
    let mut groups: BTreeMap<String, Vec<&EvaluatedRule>> = BTreeMap::new();
    for r in rules {
        groups.entry(key.group_of(r)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(group, members)| {
            let retained: Vec<&&EvaluatedRule> = members.iter().filter(|r| r.rule.verdict).collect();
            let meteor = 100.0 * mean_of(retained.iter().map(|r| r.meteor));
            let wrecall = pool_wrecall(&members);
            GroupRow {
                group,
                n_records: members.iter().map(|r| r.rule.deer_id.as_str()).collect::<BTreeSet<_>>().len(),
                n_candidates: members.len(),
                n_pool: members.iter().filter(|r| !r.rule.prefiltered).count(),
                n_retained: retained.len(),
                meteor,
                wrecall,
                green: wrecall.map(|w| green(meteor, w)),
            }
        })
        .collect()
}

/// Builds the full report: a row per seed (in `info.seeds` order), the
/// mean row, and every breakdown.
pub fn build_report(
    info: RunInfo,
    rules: &[EvaluatedRule],
    labels: Option<&BTreeMap<String, HumanLabels>>,
) -> Result<MetricReport, HarnessError> {
    let mut rows = Vec::new();
    let mut flags = Vec::new();
    for seed in &info.seeds {
        let subset: Vec<&EvaluatedRule> = rules.iter().filter(|r| r.rule.seed == Some(*seed)).collect();
        let row = summarize(&format!("seed {seed}"), &subset, labels)?;
        if row.n_retained == 0 {
            flags.push(format!("seed {seed}: no rule retained; METEOR reported as 0"));
        }
        if row.wrecall.is_none() {
            flags.push(format!("seed {seed}: fewer than 10 verified rules; no WRecall"));
        }
        rows.push(row);
    }
    if info.seeds.is_empty() {
        let all: Vec<&EvaluatedRule> = rules.iter().collect();
        rows.push(summarize("all", &all, labels)?);
    } else {
        rows.push(mean_row(&rows));
    }
    let breakdowns = BreakdownKey::ALL.into_iter().map(|k| (k, breakdown(rules, k))).collect();
    Ok(MetricReport {
        info,
        correctness_criterion: CORRECTNESS_CRITERION.into(),
        rows,
        breakdowns,
        flags,
    })
}

fn opt(v: Option<f64>, scale: f64) -> String {
    v.map_or("-".into(), |x| format!("{:.2}", x * scale))
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Aligned plain-text tables: the run rows, then one table per
    /// breakdown. Human-evaluation columns are percentages.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let modules: Vec<&str> = self.info.active_modules.iter().map(|m| m.as_str()).collect();
        let _ = writeln!(
            out,
            "system={} k={} modules=[{}] criterion={}",
            self.info.system.as_str(),
            self.info.k,
            modules.join(","),
            self.correctness_criterion
        );
        let _ = writeln!(
            out,
            "{:<8} {:>5} {:>5} {:>5} {:>7} {:>7} {:>7} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
            "run", "cand", "pool", "kept", "METEOR", "BLEU", "WRecall", "GREEN", "Prec", "Rec", "F1", "Cons", "Real", "Gen", "NTriv"
        );
        for r in &self.rows {
            let h = r.human.as_ref();
            let hv = |f: fn(&HumanEval) -> f64| opt(h.map(f), 100.0);
            let _ = writeln!(
                out,
                "{:<8} {:>5} {:>5} {:>5} {:>7.2} {:>7.2} {:>7} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
                r.label,
                r.n_candidates,
                r.n_pool,
                r.n_retained,
                r.meteor,
                r.bleu,
                opt(r.wrecall, 1.0),
                opt(r.green, 1.0),
                hv(|h| h.precision),
                hv(|h| h.recall),
                hv(|h| h.f1),
                hv(|h| h.consistent),
                hv(|h| h.reality),
                hv(|h| h.general),
                hv(|h| h.nontrivial),
            );
        }
        for (key, groups) in &self.breakdowns {
            out.push('\n');
            out.push_str(&group_table(*key, groups));
        }
        for f in &self.flags {
            let _ = writeln!(out, "note: {f}");
        }
        out
    }
}

pub fn group_table(key: BreakdownKey, groups: &[GroupRow]) -> String {
    let name = serde_json::to_value(key).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>4} {:>5} {:>5} {:>5} {:>7} {:>7} {:>6}",
        name, "recs", "cand", "pool", "kept", "METEOR", "WRecall", "GREEN"
    );
    for g in groups {
        let _ = writeln!(
            out,
            "{:<16} {:>4} {:>5} {:>5} {:>5} {:>7.2} {:>7} {:>6}",
            g.group,
            g.n_records,
            g.n_candidates,
            g.n_pool,
            g.n_retained,
            g.meteor,
            opt(g.wrecall, 1.0),
            opt(g.green, 1.0)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(id: usize, seed: u64, meteor: f64, verdict: bool, rule_type: RuleType) -> EvaluatedRule {
        EvaluatedRule {
            rule: GeneratedRule {
                rule_id: format!("r{id}"),
                deer_id: format!("d{}", id % 3),
                seed: Some(seed),
                variant: Some(FactVariant::Short3),
                verdict,
                ..Default::default()
            },
            rule_type,
            topic: Topic::ALL[id % 6],
            specificity: Specificity::Specific,
            meteor,
            bleu: meteor / 2.0,
        }
    }

    fn info(seeds: Vec<u64>) -> RunInfo {
        RunInfo {
            system: System::Pipeline,
            k: 1,
            variants: vec![FactVariant::Short3],
            active_modules: BTreeSet::new(),
            seeds,
            thresholds: None,
        }
    }

    #[test]
    fn keep_all_row() {
        let rules: Vec<_> = (0..20).map(|i| ev(i, 0, i as f64 / 20.0, true, RuleType::UnivImpl)).collect();
        let report = build_report(info(vec![0]), &rules, None).unwrap();
        let row = &report.rows[0];
        assert_eq!(row.wrecall, Some(0.5));
        assert!((row.meteor - 47.5).abs() < 1e-9);
        assert_eq!(row.green, Some((47.5f64 * 0.5).sqrt()));
        assert_eq!(report.rows[1].label, "mean");
    }

    #[test]
    fn green_squared_is_meteor_times_wrecall_on_every_row() {
        let rules: Vec<_> = (0..60)
            .map(|i| ev(i, (i % 3) as u64, ((i * 37) % 17) as f64 / 17.0, i % 4 != 0, RuleType::ALL[i % 4]))
            .collect();
        let report = build_report(info(vec![0, 1, 2]), &rules, None).unwrap();
        for row in &report.rows {
            let (g, w) = (row.green.unwrap(), row.wrecall.unwrap());
            assert!((g * g - row.meteor * w).abs() < 1e-9);
        }
    }

    #[test]
    fn breakdown_partitions() {
        let rules: Vec<_> = (0..40).map(|i| ev(i, 0, 0.5, true, RuleType::ALL[i % 4])).collect();
        let groups = breakdown(&rules, BreakdownKey::RuleType);
        assert_eq!(groups.len(), 4);
        assert_eq!(groups.iter().map(|g| g.n_candidates).sum::<usize>(), 40);
        assert!(groups.iter().any(|g| g.group == "ExistImpl"));
        let topics = breakdown(&rules, BreakdownKey::Topic);
        assert_eq!(topics.len(), 6);
        assert!(topics.iter().all(|g| g.wrecall.is_none()));
    }

    #[test]
    fn mean_row_needs_every_wrecall() {
        let mut a = summarize("a", &[], None).unwrap();
        a.meteor = 10.0;
        let mut b = a.clone();
        b.meteor = 30.0;
        b.wrecall = Some(0.5);
        let m = mean_row(&[a, b]);
        assert_eq!(m.meteor, 20.0);
        assert_eq!(m.wrecall, None);
    }

    #[test]
    fn table_has_a_line_per_row() {
        let rules: Vec<_> = (0..10).map(|i| ev(i, 0, 0.3, true, RuleType::UnivImpl)).collect();
        let report = build_report(info(vec![0]), &rules, None).unwrap();
        let table = report.to_table();
        assert!(table.contains("seed 0"));
        assert!(table.contains("mean"));
        assert!(table.contains("rule_type"));
    }
}
