//! Loads the rule corpus and prints the facts each input variant feeds the
//! proposer for one record.
//!
//! ```bash
//! cargo run --example fact_variants
//! ```

use deer::corpus::{load_deer, make_fact_variant, FactVariant};

fn main() {
    let records = load_deer(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/deer.jsonl")).unwrap();
    let record = &records[0];
    println!("{} ({}, {}): {}", record.id, record.topic.as_str(), record.rule_type.as_str(), record.rule_text);
    for variant in FactVariant::ALL {
        let input = make_fact_variant(record, variant, 3);
        println!("\n[{}]", variant.as_str());
        for fact in &input.texts {
            println!("  - {fact}");
        }
    }
}
