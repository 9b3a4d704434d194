//! Comparison systems: random template filling, TF-IDF similarity as a
//! classifier, and the always-yes classifier.
//!
//! ```bash
//! cargo run --example baselines
//! ```

use deer::baselines::{random_fill_rule, tfidf_corpus, tfidf_fit, tfidf_pair_score};
use deer::corpus::{load_deer, load_deerlet, make_fact_variant, FactVariant};
use deer::harness::{classify_with_majority, classify_with_tfidf};
use deer::templates::template_for;

fn main() {
    let fixtures = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures");
    let record = &load_deer(format!("{fixtures}/deer.jsonl")).unwrap()[0];
    let facts = make_fact_variant(record, FactVariant::Short3, 0);
    for seed in 0..3 {
        println!("Random fill seed {seed}: {}", random_fill_rule(&facts, &template_for(record.rule_type), seed).unwrap());
    }

    let deerlet = load_deerlet(format!("{fixtures}/deerlet.jsonl")).unwrap();
    let model = tfidf_fit(&tfidf_corpus(&deerlet)).unwrap();
    for r in deerlet.iter().take(3) {
        println!("tfidf {:.3}  {}", tfidf_pair_score(&r.facts, &r.rule_text, &model), r.rule_text);
    }

    print!("{}", classify_with_tfidf(&deerlet, &Default::default()).unwrap().to_table());
    print!("{}", classify_with_majority(&deerlet).to_table());
}
