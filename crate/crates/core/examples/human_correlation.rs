//! Correlates per-rule METEOR and BLEU with aggregated human labels and
//! computes human precision/recall over the retained rules.
//!
//! ```bash
//! cargo run --example human_correlation
//! ```

use std::collections::BTreeMap;

use deer::corpus::HumanLabels;
use deer::harness::{aggregate_inputs, correlate, evaluate_rules, human_eval, run_experiment, ExperimentConfig};

fn main() {
    let fixtures = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures");
    let config = ExperimentConfig::load(format!("{fixtures}/experiment.json")).unwrap();
    let output = run_experiment(&config).unwrap();
    let deer = deer::corpus::load_deer(format!("{fixtures}/deer.jsonl")).unwrap();
    let evaluated = evaluate_rules(&output.rules, &deer).unwrap();

    // Stand-in annotations: rules closer to the gold rule get better labels.
    let labels: BTreeMap<String, HumanLabels> = evaluated
        .iter()
        .map(|e| {
            let good = e.meteor > 0.25;
            let labels = HumanLabels::new(if good { 2 } else { 1 }, 2, if good { 2 } else { 0 }, 1).unwrap();
            (e.rule.rule_id.clone(), labels)
        })
        .collect();

    let (meteor, bleu, human) = aggregate_inputs(&evaluated, &labels);
    let m = correlate(&meteor, &human).unwrap();
    let b = correlate(&bleu, &human).unwrap();
    println!("METEOR vs human: r = {:.3} (p = {:.3}, n = {})", m.r, m.p_two_tailed, m.n);
    println!("BLEU   vs human: r = {:.3} (p = {:.3}, n = {})", b.r, b.p_two_tailed, b.n);

    let h = human_eval(&output.rules, &labels).unwrap();
    println!("precision {:.3}  recall {:.3}  f1 {:.3}", h.precision, h.recall, h.f1);
}
