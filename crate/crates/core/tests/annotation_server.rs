#![cfg(feature = "annotation-server")]

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use deer::corpus::{load_deerlet, DeerletSplit};
use deer::harness::{spawn_annotation_server, write_rules, AnnotationConfig, GUIDELINES};
use deer::metrics::aggregate_human;
use deer::pipeline::GeneratedRule;

fn candidates(dir: &Path) -> PathBuf {
    let rules: Vec<GeneratedRule> = (0..3)
        .map(|i| GeneratedRule {
            rule_id: format!("b1/short3/s0/c{i}"),
            deer_id: "b1".into(),
            text: format!("If a plant grows in bog number {i}, then it catches insects."),
            facts: vec!["Sundews grow in bogs.".into(), "Sundews catch flies.".into()],
            token_count: 50,
            prefiltered: i == 2,
            ..Default::default()
        })
        .collect();
    let path = dir.join("candidates.jsonl");
    write_rules(&path, &rules).unwrap();
    path
}

fn config(dir: &Path) -> AnnotationConfig {
    AnnotationConfig {
        candidates_path: candidates(dir),
        output_path: dir.join("labels.jsonl"),
        deer_path: Some(PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/deer.jsonl"))),
        static_dir: None,
        split: DeerletSplit::Test,
    }
}

fn label(id: &str, c: u64, r: u64, g: u64, t: u64) -> Value {
    json!({"rule_id": id, "label_consistent": c, "label_reality": r, "label_general": g, "label_nontrivial": t})
}

#[test]
fn label_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let server = spawn_annotation_server("127.0.0.1:0", config(dir.path())).unwrap();
    let http = reqwest::blocking::Client::new();

    let items: Value = http.get(server.url("/api/items")).send().unwrap().json().unwrap();
    assert_eq!(items["total"], 2, "prefiltered candidates are not queued");
    assert_eq!(items["labeled"], 0);
    let first = items["items"][0]["rule_id"].as_str().unwrap().to_string();

    let resp = http.post(server.url("/api/labels")).json(&label(&first, 2, 1, 2, 1)).send().unwrap();
    assert_eq!(resp.status(), 200);

    let export = http.get(server.url("/api/export")).send().unwrap().text().unwrap();
    assert_eq!(export.lines().count(), 1);
    assert_eq!(export, std::fs::read_to_string(dir.path().join("labels.jsonl")).unwrap());
    let records = load_deerlet(dir.path().join("labels.jsonl")).unwrap();
    assert_eq!(records[0].id, first);
    assert_eq!(records[0].deer_id, "b1");
    assert_eq!(aggregate_human(&records[0].labels()), 0.5);

    let items: Value = http.get(server.url("/api/items")).send().unwrap().json().unwrap();
    assert_eq!(items["labeled"], 1);
    assert_eq!(items["items"].as_array().unwrap().len(), 1);
}

#[test]
fn out_of_range_and_missing_fields_are_422() {
    let dir = tempfile::tempdir().unwrap();
    let server = spawn_annotation_server("127.0.0.1:0", config(dir.path())).unwrap();
    let http = reqwest::blocking::Client::new();
    let id = "b1/short3/s0/c0";

    let resp = http.post(server.url("/api/labels")).json(&label(id, 2, 3, 2, 1)).send().unwrap();
    assert_eq!(resp.status(), 422);
    let body: Value = resp.json().unwrap();
    assert_eq!(body["field"], "label_reality");

    let resp = http.post(server.url("/api/labels")).json(&label(id, 1, 1, 1, 2)).send().unwrap();
    assert_eq!(resp.json::<Value>().unwrap()["field"], "label_nontrivial");

    let resp = http
        .post(server.url("/api/labels"))
        .json(&json!({"rule_id": id, "label_consistent": 1, "label_reality": 1, "label_general": 1}))
        .send()
        .unwrap();
    assert_eq!(resp.status(), 422);
    assert_eq!(resp.json::<Value>().unwrap()["field"], "label_nontrivial");

    let resp = http.post(server.url("/api/labels")).json(&label("nope", 1, 1, 1, 1)).send().unwrap();
    assert_eq!(resp.status(), 404);
    assert!(!dir.path().join("labels.jsonl").exists());
}

#[test]
fn duplicates_replace_and_labels_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let http = reqwest::blocking::Client::new();
    let server = spawn_annotation_server("127.0.0.1:0", cfg.clone()).unwrap();
    http.post(server.url("/api/labels")).json(&label("b1/short3/s0/c0", 0, 0, 0, 0)).send().unwrap();
    http.post(server.url("/api/labels")).json(&label("b1/short3/s0/c1", 1, 1, 1, 1)).send().unwrap();
    let resp: Value = http
        .post(server.url("/api/labels"))
        .json(&label("b1/short3/s0/c0", 2, 2, 2, 1))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(resp["replaced"], true);
    server.shutdown();

    let records = load_deerlet(&cfg.output_path).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0].id, "b1/short3/s0/c0");
    assert_eq!(records[0].label_consistent, 2);

    let server = spawn_annotation_server("127.0.0.1:0", cfg).unwrap();
    let items: Value = http.get(server.url("/api/items")).send().unwrap().json().unwrap();
    assert_eq!(items["labeled"], 2);
    assert!(items["items"].as_array().unwrap().is_empty());
}

#[test]
fn guidelines_and_static_files() {
    let dir = tempfile::tempdir().unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<h1>labels</h1>").unwrap();
    let mut cfg = config(dir.path());
    cfg.static_dir = Some(ui);
    let server = spawn_annotation_server("127.0.0.1:0", cfg).unwrap();
    let http = reqwest::blocking::Client::new();
    let g: Value = http.get(server.url("/api/guidelines")).send().unwrap().json().unwrap();
    assert_eq!(g["aspects"].as_array().unwrap().len(), GUIDELINES.len());
    assert_eq!(g["aspects"][3]["field"], "label_nontrivial");
    assert_eq!(http.get(server.url("/index.html")).send().unwrap().text().unwrap(), "<h1>labels</h1>");
    let empty = http.get(server.url("/api/export")).send().unwrap().text().unwrap();
    assert!(empty.is_empty());
}

#[test]
fn unknown_source_record_is_rejected_at_startup() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    let mut rules = deer::harness::read_rules(&cfg.candidates_path).unwrap();
    rules[0].deer_id = "zz".into();
    write_rules(&cfg.candidates_path, &rules).unwrap();
    cfg.output_path = dir.path().join("out.jsonl");
    assert!(spawn_annotation_server("127.0.0.1:0", cfg).is_err());
}
