//! Proposes candidate rules with the offline backend, scores them with the
//! four verifiers, and keeps the ones that clear every threshold.
//!
//! ```bash
//! cargo run --example propose_and_verify
//! ```

use std::collections::BTreeSet;

use deer::backend::MockBackend;
use deer::corpus::{load_deer, make_fact_variant, FactVariant};
use deer::pipeline::{apply_verdicts, propose_rules, score_rules, ModuleId, PromptSet, ProposerConfig, ThresholdSet};
use deer::templates::template_for;

fn main() {
    let records = load_deer(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/deer.jsonl")).unwrap();
    let record = &records[0];
    let facts = make_fact_variant(record, FactVariant::Short3, 0);

    let backend = MockBackend::new(42);
    let prompts = PromptSet::builtin();
    let proposer = ProposerConfig { min_tokens: 12, ..Default::default() };
    let proposal = propose_rules(&backend, &prompts, &record.id, &facts, &template_for(record.rule_type), 6, 0, &proposer).unwrap();
    let mut rules = proposal.rules;

    let modules: BTreeSet<ModuleId> = ModuleId::VERIFIERS.into_iter().collect();
    score_rules(&backend, &prompts, &mut rules, &modules, 0).unwrap();
    apply_verdicts(&mut rules, &ThresholdSet::uniform(0.1).unwrap(), &modules).unwrap();

    for rule in &rules {
        let scores: Vec<String> = rule.scores.iter().map(|(m, s)| format!("{m}={s:.2}")).collect();
        let status = if rule.prefiltered { "short" } else if rule.verdict { "keep" } else { "drop" };
        println!("{status:<5} [{}] {}", scores.join(" "), rule.text);
    }
}
