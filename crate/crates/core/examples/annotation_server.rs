//! Serves the annotation API over a queue of generated rules, submits one
//! set of labels, and reads back the export.
//!
//! ```bash
//! cargo run --example annotation_server
//! ```

use deer::corpus::DeerletSplit;
use deer::harness::{run_experiment, spawn_annotation_server, write_rules, AnnotationConfig, ExperimentConfig};
use deer::metrics::aggregate_human;

fn main() {
    let dir = std::env::temp_dir().join("deer-annotation-example");
    std::fs::create_dir_all(&dir).unwrap();
    let config = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/experiment.json")).unwrap();
    let rules = run_experiment(&config).unwrap().rules;
    let queue: Vec<_> = rules.into_iter().filter(|r| r.verdict).take(5).collect();
    write_rules(dir.join("queue.jsonl"), &queue).unwrap();
    let output = dir.join("labels.jsonl");
    let _ = std::fs::remove_file(&output);

    let server = spawn_annotation_server(
        "127.0.0.1:0",
        AnnotationConfig {
            candidates_path: dir.join("queue.jsonl"),
            output_path: output.clone(),
            deer_path: None,
            static_dir: None,
            split: DeerletSplit::Test,
        },
    )
    .unwrap();
    let client = reqwest::blocking::Client::new();
    let items: serde_json::Value = client.get(server.url("/api/items")).send().unwrap().json().unwrap();
    println!("{} of {} items pending", items["items"].as_array().map_or(0, Vec::len), items["total"]);

    let body = serde_json::json!({
        "rule_id": queue[0].rule_id,
        "label_consistent": 2, "label_reality": 1, "label_general": 2, "label_nontrivial": 1,
    });
    let reply: serde_json::Value = client.post(server.url("/api/labels")).json(&body).send().unwrap().json().unwrap();
    println!("submit: {reply}");

    let bad = serde_json::json!({"rule_id": queue[0].rule_id, "label_consistent": 5, "label_reality": 1, "label_general": 2, "label_nontrivial": 1});
    let rejected = client.post(server.url("/api/labels")).json(&bad).send().unwrap();
    println!("out of range: {} {}", rejected.status(), rejected.text().unwrap());

    let export = deer::corpus::load_deerlet(&output).unwrap();
    println!("exported {} record(s), aggregate human {:.2}", export.len(), aggregate_human(&export[0].labels()));
    server.shutdown();
}
