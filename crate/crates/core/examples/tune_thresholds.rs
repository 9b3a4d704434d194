//! Tunes verifier thresholds on the labelled validation split, then shows
//! the tuner on a hand-made score set.
//!
//! ```bash
//! cargo run --example tune_thresholds
//! ```

use std::collections::BTreeSet;

use deer::backend::{MockBackend, ScriptEntry};
use deer::corpus::{load_deerlet, DeerletSplit};
use deer::harness::tune_thresholds;
use deer::pipeline::{ModuleId, PromptSet};
use deer::tuning::{tune_threshold, TuningPolicy};

fn main() {
    let fixtures = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures");
    let script: Vec<ScriptEntry> =
        serde_json::from_str(&std::fs::read_to_string(format!("{fixtures}/mock_script.json")).unwrap()).unwrap();
    let backend = MockBackend::with_script(7, script).unwrap();
    let val: Vec<_> = load_deerlet(format!("{fixtures}/deerlet.jsonl"))
        .unwrap()
        .into_iter()
        .filter(|r| r.split == DeerletSplit::Val)
        .collect();
    let modules: BTreeSet<ModuleId> = ModuleId::VERIFIERS.into_iter().collect();
    let set = tune_thresholds(&backend, &PromptSet::builtin(), &val, &modules, 0, &TuningPolicy::default()).unwrap();
    println!("{}", serde_json::to_string_pretty(&set).unwrap());

    let r = tune_threshold(&[0.9, 0.8, 0.7, 0.2, 0.3], &[true, true, true, false, false], &TuningPolicy::default()).unwrap();
    println!("separable set: threshold {:.2}, f1 {:.2}, mode {:?}", r.threshold, r.f1, r.mode);
}
