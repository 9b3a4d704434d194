//! Generate-then-verify rule induction.
//!
//! M1 proposes candidate rules from facts and a template. Candidates at or
//! below the token floor are dropped before verification. M2..M5 each
//! score the survivors with a yes/no probability:
//!
//! | module | question                                    | sees facts |
//! |--------|---------------------------------------------|------------|
//! | M2     | consistent with the facts?                  | yes        |
//! | M3     | true of the world (not just the facts)?     | no         |
//! | M4     | more general than the facts?                | yes        |
//! | M5     | complete and non-trivial?                   | no         |
//!
//! A rule is kept when every active module's score clears its threshold.
//! The product of the four scores is recorded as `combined` for ranking.

mod prompt;
mod propose;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::corpus::FactVariant;

pub use prompt::{assemble_prompt, slots_for, FewShot, PromptSet, PromptSpec, Slots};
pub use propose::{candidate_seed, propose_rules, score_rules, verify, Proposal, ProposerConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("prompt: {0}")]
    Prompt(String),
    #[error("{module} prompt needs a {slot}")]
    MissingSlot { module: ModuleId, slot: &'static str },
    #[error("rule {0} was prefiltered and cannot be verified")]
    Prefiltered(String),
    #[error("{0} is not a verifier module")]
    NotAVerifier(ModuleId),
    #[error("rule {rule_id} has no {module} score")]
    MissingScore { rule_id: String, module: ModuleId },
    #[error("invalid threshold for {module}: {value} outside [0.05, 0.95]")]
    ThresholdRange { module: ModuleId, value: f64 },
    #[error("k must be at least 1")]
    ZeroCandidates,
    #[error("thresholds file: {0}")]
    ThresholdFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModuleId {
    M1,
    M2,
    M3,
    M4,
    M5,
}

impl ModuleId {
    pub const ALL: [ModuleId; 5] = [ModuleId::M1, ModuleId::M2, ModuleId::M3, ModuleId::M4, ModuleId::M5];
    pub const VERIFIERS: [ModuleId; 4] = [ModuleId::M2, ModuleId::M3, ModuleId::M4, ModuleId::M5];

    pub fn as_str(self) -> &'static str {
        match self {
            ModuleId::M1 => "M1",
            ModuleId::M2 => "M2",
            ModuleId::M3 => "M3",
            ModuleId::M4 => "M4",
            ModuleId::M5 => "M5",
        }
    }

    pub fn is_verifier(self) -> bool {
        self != ModuleId::M1
    }
}

impl fmt::Display for ModuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModuleId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModuleId::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown module `{s}`"))
    }
}

/// A candidate rule and everything the pipeline learned about it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRule {
    pub rule_id: String,
    pub deer_id: String,
    pub text: String,
    /// The facts the rule was induced from.
    pub facts: Vec<String>,
    /// How the facts were built from the source record.
    #[serde(default)]
    pub variant: Option<FactVariant>,
    /// Run seed the rule was generated under.
    #[serde(default)]
    pub seed: Option<u64>,
    pub token_count: usize,
    pub scores: BTreeMap<ModuleId, f64>,
    /// Product of the present scores; `None` until something is scored.
    pub combined: Option<f64>,
    pub verdict: bool,
    pub prefiltered: bool,
}

impl GeneratedRule {
    pub fn recompute_combined(&mut self) {
        self.combined = (!self.scores.is_empty()).then(|| compose(&self.scores));
    }
}

/// Product of the verifier probabilities: the consistency and generality
/// scores stand in for P(facts | rule), reality and non-triviality for
/// P(rule).
pub fn compose(scores: &BTreeMap<ModuleId, f64>) -> f64 {
    scores.values().product()
}

pub const THRESHOLD_BOUNDS: (f64, f64) = (0.05, 0.95);

/// Per-verifier decision thresholds. Serialized as
/// `{"M2": t2, ..., "diagnostics": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    #[serde(flatten)]
    pub thresholds: BTreeMap<ModuleId, f64>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub diagnostics: serde_json::Value,
}

impl ThresholdSet {
    pub fn uniform(value: f64) -> Result<Self, PipelineError> {
        let set = ThresholdSet {
            thresholds: ModuleId::VERIFIERS.into_iter().map(|m| (m, value)).collect(),
            diagnostics: serde_json::Value::Null,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        for (module, value) in &self.thresholds {
            if !module.is_verifier() {
                return Err(PipelineError::NotAVerifier(*module));
            }
            if !(THRESHOLD_BOUNDS.0..=THRESHOLD_BOUNDS.1).contains(value) {
                return Err(PipelineError::ThresholdRange {
                    module: *module,
                    value: *value,
                });
            }
        }
        Ok(())
    }

    pub fn get(&self, module: ModuleId) -> Option<f64> {
        self.thresholds.get(&module).copied()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| PipelineError::ThresholdFile(format!("{}: {e}", path.as_ref().display())))?;
        let set: ThresholdSet =
            serde_json::from_str(&text).map_err(|e| PipelineError::ThresholdFile(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }
}

/// Whether `rule` passes every active module.
pub fn passes(
    rule: &GeneratedRule,
    thresholds: &ThresholdSet,
    active: &BTreeSet<ModuleId>,
) -> Result<bool, PipelineError> {
    if rule.prefiltered {
        return Ok(false);
    }
    for module in active {
        let score = rule.scores.get(module).ok_or_else(|| PipelineError::MissingScore {
            rule_id: rule.rule_id.clone(),
            module: *module,
        })?;
        let threshold = thresholds.get(*module).ok_or_else(|| PipelineError::ThresholdFile(format!("no threshold for {module}")))?;
        if *score < threshold {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Sets `verdict` on every rule.
pub fn apply_verdicts(
    rules: &mut [GeneratedRule],
    thresholds: &ThresholdSet,
    active: &BTreeSet<ModuleId>,
) -> Result<(), PipelineError> {
    for rule in rules.iter_mut() {
        rule.verdict = passes(rule, thresholds, active)?;
    }
    Ok(())
}

/// The retained rules, in input order, with `verdict` set.
pub fn filter_rules(
    rules: &[GeneratedRule],
    thresholds: &ThresholdSet,
    active: &BTreeSet<ModuleId>,
) -> Result<Vec<GeneratedRule>, PipelineError> {
    let mut out = Vec::new();
    for rule in rules {
        if passes(rule, thresholds, active)? {
            let mut kept = rule.clone();
            kept.verdict = true;
            out.push(kept);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scores(v: [f64; 4]) -> BTreeMap<ModuleId, f64> {
        ModuleId::VERIFIERS.into_iter().zip(v).collect()
    }

    fn rule(id: usize, v: [f64; 4], prefiltered: bool) -> GeneratedRule {
        let mut r = GeneratedRule {
            rule_id: format!("r{id}"),
            deer_id: "d".into(),
            text: "If x, then y.".into(),
            facts: vec![],
            variant: None,
            seed: None,
            token_count: if prefiltered { 10 } else { 50 },
            scores: if prefiltered { BTreeMap::new() } else { scores(v) },
            combined: None,
            verdict: false,
            prefiltered,
        };
        r.recompute_combined();
        r
    }

    #[test]
    fn compose_examples() {
        assert_eq!(compose(&scores([1.0; 4])), 1.0);
        assert!((compose(&scores([0.9, 0.8, 1.0, 0.5])) - 0.36).abs() < 1e-12);
    }

    #[test]
    fn no_active_modules_keeps_everything_not_prefiltered() {
        let rules = vec![rule(0, [0.1; 4], false), rule(1, [0.0; 4], true), rule(2, [0.9; 4], false)];
        let kept = filter_rules(&rules, &ThresholdSet::uniform(0.5).unwrap(), &BTreeSet::new()).unwrap();
        let ids: Vec<_> = kept.iter().map(|r| r.rule_id.as_str()).collect();
        assert_eq!(ids, vec!["r0", "r2"]);
    }

    #[test]
    fn missing_score_is_an_error() {
        let mut r = rule(0, [0.5; 4], false);
        r.scores.remove(&ModuleId::M4);
        let active: BTreeSet<_> = [ModuleId::M4].into();
        assert!(matches!(
            filter_rules(&[r], &ThresholdSet::uniform(0.5).unwrap(), &active),
            Err(PipelineError::MissingScore { module: ModuleId::M4, .. })
        ));
    }

    #[test]
    fn threshold_file_shape() {
        let mut set = ThresholdSet::uniform(0.5).unwrap();
        set.thresholds.insert(ModuleId::M3, 0.62);
        let json = serde_json::to_string(&set).unwrap();
        assert_eq!(json, r#"{"M2":0.5,"M3":0.62,"M4":0.5,"M5":0.5}"#);
        let back: ThresholdSet = serde_json::from_str(r#"{"M2":0.5,"M3":0.62,"M4":0.5,"M5":0.5,"diagnostics":{"mode":"x"}}"#).unwrap();
        assert_eq!(back.thresholds, set.thresholds);
        assert!(ThresholdSet::uniform(0.99).is_err());
    }

    proptest! {
        #[test]
        fn compose_bounded_by_each_score(v in prop::array::uniform4(0.0f64..=1.0)) {
            let c = compose(&scores(v));
            for s in v {
                prop_assert!(c <= s + 1e-15);
            }
            let mut swapped = v;
            swapped.swap(0, 3);
            prop_assert!((compose(&scores(swapped)) - c).abs() < 1e-15);
        }

        #[test]
        fn raising_a_threshold_never_grows_the_kept_set(
            all in prop::collection::vec(prop::array::uniform4(0.0f64..=1.0), 1..30),
            low in 0.05f64..0.95,
            bump in 0.0f64..0.9,
            which in 0usize..4,
        ) {
            let rules: Vec<_> = all.iter().enumerate().map(|(i, v)| rule(i, *v, false)).collect();
            let active: BTreeSet<_> = ModuleId::VERIFIERS.into();
            let base = ThresholdSet::uniform(low).unwrap();
            let mut raised = base.clone();
            let m = ModuleId::VERIFIERS[which];
            raised.thresholds.insert(m, (low + bump).min(0.95));
            let a: BTreeSet<_> = filter_rules(&rules, &base, &active).unwrap().into_iter().map(|r| r.rule_id).collect();
            let b: BTreeSet<_> = filter_rules(&rules, &raised, &active).unwrap().into_iter().map(|r| r.rule_id).collect();
            prop_assert!(b.is_subset(&a));
        }
    }
}
