use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{ExperimentConfig, System, ThresholdSource};
use super::report::{build_report, evaluate_rules, MetricReport, RunInfo};
use super::HarnessError;
use crate::backend::CompletionBackend;
use crate::baselines::{majority_classify, random_fill_rule, tfidf_corpus, tfidf_fit, tfidf_pair_score};
use crate::corpus::{
    load_deer, load_deerlet, make_fact_variant, write_jsonl, DeerRecord, DeerletRecord, DeerletSplit, FactInput,
    HumanLabels,
};
use crate::metrics::{classification_metrics, ClassificationMetrics};
use crate::pipeline::{
    apply_verdicts, propose_rules, score_rules, GeneratedRule, ModuleId, PromptSet, ProposerConfig,
    ThresholdSet,
};
use crate::templates::template_for;
use crate::tuning::{binarize_gold, tune_threshold, TuningPolicy};

/// Threshold used for a module whose tuning finds nothing.
pub const FALLBACK_THRESHOLD: f64 = 0.5;

/// The DEERLET label a verifier module is judged against.
pub fn aspect_label(record: &DeerletRecord, module: ModuleId) -> Option<u8> {
    match module {
        ModuleId::M1 => None,
        ModuleId::M2 => Some(record.label_consistent),
        ModuleId::M3 => Some(record.label_reality),
        ModuleId::M4 => Some(record.label_general),
        ModuleId::M5 => Some(record.label_nontrivial),
    }
}

pub fn aspect_golds(records: &[DeerletRecord], module: ModuleId) -> Vec<bool> {
    records
        .iter()
        .map(|r| aspect_label(r, module).is_some_and(binarize_gold))
        .collect()
}

fn as_candidate(record: &DeerletRecord) -> GeneratedRule {
    GeneratedRule {
        rule_id: record.id.clone(),
        deer_id: record.deer_id.clone(),
        text: record.rule_text.clone(),
        facts: record.facts.clone(),
        ..Default::default()
    }
}

/// Scores each DEERLET pair with one verifier.
pub fn score_deerlet(
    backend: &dyn CompletionBackend,
    prompts: &PromptSet,
    records: &[DeerletRecord],
    module: ModuleId,
    seed: u64,
) -> Result<Vec<f64>, HarnessError> {
    let mut rules: Vec<GeneratedRule> = records.iter().map(as_candidate).collect();
    score_rules(backend, prompts, &mut rules, &BTreeSet::from([module]), seed)?;
    Ok(rules.iter().map(|r| r.scores[&module]).collect())
}

/// Tunes one threshold per module on labelled pairs. Modules whose tuning
/// fails get [`FALLBACK_THRESHOLD`]; every outcome is kept in the
/// diagnostics.
pub fn tune_thresholds(
    backend: &dyn CompletionBackend,
    prompts: &PromptSet,
    val: &[DeerletRecord],
    modules: &BTreeSet<ModuleId>,
    seed: u64,
    policy: &TuningPolicy,
) -> Result<ThresholdSet, HarnessError> {
    let mut set = ThresholdSet::uniform(FALLBACK_THRESHOLD)?;
    let mut diagnostics = serde_json::Map::new();
    for &module in modules {
        let scores = score_deerlet(backend, prompts, val, module, seed)?;
        let golds = aspect_golds(val, module);
        match tune_threshold(&scores, &golds, policy) {
            Ok(result) => {
                set.thresholds.insert(module, result.threshold);
                diagnostics.insert(module.to_string(), json!(result));
            }
            Err(e) => {
                warn!("{module}: {e}; using {FALLBACK_THRESHOLD}");
                diagnostics.insert(module.to_string(), json!({"fallback": true, "reason": e.to_string()}));
            }
        }
    }
    set.diagnostics = serde_json::Value::Object(diagnostics);
    set.validate()?;
    Ok(set)
}

fn split_of(records: &[DeerletRecord], split: DeerletSplit) -> Vec<DeerletRecord> {
    records.iter().filter(|r| r.split == split).cloned().collect()
}

/// Rules generated for one record, one fact variant and one seed.
#[allow(clippy::too_many_arguments)]
pub fn generate_for_record(
    backend: &dyn CompletionBackend,
    prompts: &PromptSet,
    system: System,
    record: &DeerRecord,
    facts: &FactInput,
    k: usize,
    seed: u64,
    proposer: &ProposerConfig,
) -> Result<Vec<GeneratedRule>, HarnessError> {
    let template = template_for(record.rule_type);
    match system {
        System::Pipeline => {
            let proposal = propose_rules(backend, prompts, &record.id, facts, &template, k, seed, proposer)?;
            if proposal.rules.is_empty() {
                if let Some((_, e)) = proposal.failures.into_iter().next() {
                    return Err(e.into());
                }
            }
            Ok(proposal.rules)
        }
        System::RandomFill => (0..k)
            .map(|i| {
                let text = random_fill_rule(facts, &template, crate::pipeline::candidate_seed(seed, k, i))?;
                let token_count = backend.count_tokens(&text)?.count;
                Ok(GeneratedRule {
                    rule_id: format!("{}/{}/s{seed}/c{i}", record.id, facts.variant),
                    deer_id: record.id.clone(),
                    text,
                    facts: facts.texts.clone(),
                    variant: Some(facts.variant),
                    seed: Some(seed),
                    token_count,
                    prefiltered: token_count <= proposer.min_tokens,
                    ..Default::default()
                })
            })
            .collect(),
    }
}

pub struct ExperimentOutput {
    pub report: MetricReport,
    /// Every candidate of every seed, with scores and verdicts.
    pub rules: Vec<GeneratedRule>,
    pub thresholds: ThresholdSet,
}

/// Reads a generated-rules JSONL file.
pub fn read_rules(path: impl AsRef<Path>) -> Result<Vec<GeneratedRule>, HarnessError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::Config(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn write_rules(path: impl AsRef<Path>, rules: &[GeneratedRule]) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let io = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    write_jsonl(std::io::BufWriter::new(file), rules).map_err(io)
}

/// Reads DEERLET-format labels keyed by record id (the rule id for
/// generated rules).
pub fn load_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, HumanLabels>, HarnessError> {
    Ok(load_deerlet(path)?.into_iter().map(|r| (r.id.clone(), r.labels())).collect())
}

pub fn resolve_thresholds(
    config: &ExperimentConfig,
    backend: &dyn CompletionBackend,
    prompts: &PromptSet,
) -> Result<ThresholdSet, HarnessError> {
    Ok(match &config.thresholds {
        ThresholdSource::Uniform(v) => ThresholdSet::uniform(*v)?,
        ThresholdSource::File(path) => ThresholdSet::load(path)?,
        ThresholdSource::Tune => {
            let path = config.deerlet_path.as_ref().expect("validated");
            let val = split_of(&load_deerlet(path)?, DeerletSplit::Val);
            let seed = config.seeds.first().copied().unwrap_or(0);
            tune_thresholds(backend, prompts, &val, &config.active_modules, seed, &config.tuning)?
        }
    })
}

/// Generates, verifies and filters rules for every selected record under
/// every seed and fact variant, then scores them against the gold rules.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    config.validate()?;
    let backend = config.backend.build()?;
    run_experiment_with(config, backend.as_ref())
}

/// [`run_experiment`] against an already constructed backend.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    backend: &dyn CompletionBackend,
) -> Result<ExperimentOutput, HarnessError> {
    let prompts = config.prompts()?;
    let records: Vec<DeerRecord> = load_deer(&config.deer_path)?
        .into_iter()
        .filter(|r| config.split.is_none_or(|s| r.split == s))
        .collect();
    let labels = config.labels_path.as_ref().map(load_labels).transpose()?;
    let thresholds = resolve_thresholds(config, backend, &prompts)?;

    let mut rules = Vec::new();
    for &seed in &config.seeds {
        let mut batch = Vec::new();
        for &variant in &config.variants {
            for record in &records {
                let facts = make_fact_variant(record, variant, seed);
                batch.extend(generate_for_record(
                    backend,
                    &prompts,
                    config.system,
                    record,
                    &facts,
                    config.k,
                    seed,
                    &config.proposer,
                )?);
            }
        }
        if !config.active_modules.is_empty() {
            score_rules(backend, &prompts, &mut batch, &config.active_modules, seed)?;
        }
        apply_verdicts(&mut batch, &thresholds, &config.active_modules)?;
        info!(
            "seed {seed}: {} candidates, {} retained",
            batch.len(),
            batch.iter().filter(|r| r.verdict).count()
        );
        rules.extend(batch);
    }

    let evaluated = evaluate_rules(&rules, &records)?;
    let info = RunInfo {
        system: config.system,
        k: config.k,
        variants: config.variants.clone(),
        active_modules: config.active_modules.clone(),
        seeds: config.seeds.clone(),
        thresholds: Some(thresholds.clone()),
    };
    let report = build_report(info, &evaluated, labels.as_ref())?;
    let output = ExperimentOutput {
        report,
        rules,
        thresholds,
    };
    if let Some(dir) = &config.output_dir {
        write_outputs(dir, &output)?;
    }
    Ok(output)
}

/// Writes `rules.jsonl`, `thresholds.json`, `report.json` and
/// `report.txt` into `dir`.
pub fn write_outputs(dir: &Path, output: &ExperimentOutput) -> Result<(), HarnessError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    write_rules(dir.join("rules.jsonl"), &output.rules)?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(io(&path))
    };
    write(
        "thresholds.json",
        serde_json::to_string_pretty(&output.thresholds).expect("thresholds serialize") + "\n",
    )?;
    write("report.json", output.report.to_json())?;
    write("report.txt", output.report.to_table())?;
    Ok(())
}

/// Classification quality of one system on one DEERLET aspect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRow {
    pub threshold: Option<f64>,
    pub metrics: ClassificationMetrics,
    pub positive_rate: f64,
    pub n: usize,
}

/// Per-aspect classification results of one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub system: String,
    pub rows: BTreeMap<ModuleId, ClassificationRow>,
}

impl ClassificationReport {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<10} {:<6} {:>6} {:>9} {:>6} {:>6} {:>6} {:>6}\n",
            "system", "module", "thr", "accuracy", "prec", "rec", "f1", "AP"
        );
        for (m, row) in &self.rows {
            let c = &row.metrics;
            out.push_str(&format!(
                "{:<10} {:<6} {:>6} {:>9.2} {:>6.2} {:>6.2} {:>6.2} {:>6.2}\n",
                self.system,
                m.as_str(),
                row.threshold.map_or("-".into(), |t| format!("{t:.2}")),
                100.0 * c.accuracy,
                100.0 * c.precision,
                100.0 * c.recall,
                100.0 * c.f1,
                100.0 * c.average_precision,
            ));
        }
        out
    }
}

fn row(scores: &[f64], golds: &[bool], threshold: Option<f64>) -> ClassificationRow {
    ClassificationRow {
        threshold,
        metrics: classification_metrics(scores, golds, threshold.unwrap_or(0.0)),
        positive_rate: golds.iter().filter(|g| **g).count() as f64 / golds.len().max(1) as f64,
        n: golds.len(),
    }
}

fn tuned(scores: &[f64], golds: &[bool], policy: &TuningPolicy) -> f64 {
    tune_threshold(scores, golds, policy).map_or(FALLBACK_THRESHOLD, |r| r.threshold)
}

/// Verifier modules as DEERLET classifiers: thresholds tuned on the
/// validation split, metrics on the test split.
pub fn classify_with_verifiers(
    backend: &dyn CompletionBackend,
    prompts: &PromptSet,
    deerlet: &[DeerletRecord],
    modules: &BTreeSet<ModuleId>,
    seed: u64,
    policy: &TuningPolicy,
) -> Result<ClassificationReport, HarnessError> {
    let val = split_of(deerlet, DeerletSplit::Val);
    let test = split_of(deerlet, DeerletSplit::Test);
    let mut rows = BTreeMap::new();
    for &m in modules {
        let t = tuned(&score_deerlet(backend, prompts, &val, m, seed)?, &aspect_golds(&val, m), policy);
        let scores = score_deerlet(backend, prompts, &test, m, seed)?;
        rows.insert(m, row(&scores, &aspect_golds(&test, m), Some(t)));
    }
    Ok(ClassificationReport { system: "pipeline".into(), rows })
}

/// TF-IDF similarity of facts and rule as a classifier for every aspect:
/// fit on train, threshold tuned on val, evaluated on test.
pub fn classify_with_tfidf(deerlet: &[DeerletRecord], policy: &TuningPolicy) -> Result<ClassificationReport, HarnessError> {
    let train = split_of(deerlet, DeerletSplit::Train);
    let val = split_of(deerlet, DeerletSplit::Val);
    let test = split_of(deerlet, DeerletSplit::Test);
    let model = tfidf_fit(&tfidf_corpus(&train))?;
    let score = |rs: &[DeerletRecord]| -> Vec<f64> {
        rs.iter().map(|r| tfidf_pair_score(&r.facts, &r.rule_text, &model)).collect()
    };
    let (val_scores, test_scores) = (score(&val), score(&test));
    let rows = ModuleId::VERIFIERS
        .into_iter()
        .map(|m| {
            let t = tuned(&val_scores, &aspect_golds(&val, m), policy);
            (m, row(&test_scores, &aspect_golds(&test, m), Some(t)))
        })
        .collect();
    Ok(ClassificationReport { system: "tfidf".into(), rows })
}

/// The always-yes classifier on the test split.
pub fn classify_with_majority(deerlet: &[DeerletRecord]) -> ClassificationReport {
    let test = split_of(deerlet, DeerletSplit::Test);
    let preds: Vec<f64> = majority_classify(test.len()).into_iter().map(f64::from).collect();
    let rows = ModuleId::VERIFIERS
        .into_iter()
        .map(|m| (m, row(&preds, &aspect_golds(&test, m), None)))
        .collect();
    ClassificationReport { system: "majority".into(), rows }
}
