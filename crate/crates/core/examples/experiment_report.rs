//! Runs the fixture experiment end to end (proposal, tuned verification,
//! filtering, scoring) and prints the report tables.
//!
//! ```bash
//! cargo run --example experiment_report
//! ```

use deer::harness::{group_table, run_experiment, BreakdownKey, ExperimentConfig};

fn main() {
    let config = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/experiment.json")).unwrap();
    let output = run_experiment(&config).unwrap();
    print!("{}", output.report.to_table());
    for key in [BreakdownKey::RuleType, BreakdownKey::Topic] {
        println!();
        print!("{}", group_table(key, &output.report.breakdowns[&key]));
    }
    println!("\nthresholds: {}", serde_json::to_string(&output.thresholds).unwrap());
}
