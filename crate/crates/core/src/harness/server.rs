use std::collections::BTreeMap;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use super::HarnessError;
use crate::corpus::{load_deer, load_deerlet, DeerletRecord, DeerletSplit, HumanLabels};
use crate::pipeline::GeneratedRule;

/// Annotator guidance for each label, served at `/api/guidelines`.
pub const GUIDELINES: [(&str, &str, &str); 4] = [
    (
        "label_consistent",
        "0-2",
        "Does the rule agree with the facts shown? 2: every fact is an instance of the rule or is \
         explained by it. 1: some facts fit and others are unrelated or fit only loosely. 0: the rule \
         contradicts a fact or has nothing to do with them.",
    ),
    (
        "label_reality",
        "0-2",
        "Is the rule true of the world, setting the facts aside? 2: true as stated. 1: true only with \
         exceptions or extra qualification. 0: false.",
    ),
    (
        "label_general",
        "0-2",
        "Does the rule reach beyond the facts? 2: it covers cases the facts do not mention. 1: it is \
         only slightly broader, e.g. one fact restated in general words. 0: it is no broader than the \
         facts.",
    ),
    (
        "label_nontrivial",
        "0-1",
        "Is the rule a complete statement that says something? 1: yes. 0: it is cut off, circular, \
         repeats itself, or is empty of content.",
    ),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationConfig {
    /// Generated rules to label (JSONL of generated-rule records).
    pub candidates_path: PathBuf,
    /// DEERLET JSONL the labels are written to; created if missing.
    pub output_path: PathBuf,
    /// When given, every candidate must come from a record in this file.
    pub deer_path: Option<PathBuf>,
    /// Directory of static files served at `/`.
    pub static_dir: Option<PathBuf>,
    /// Split written into every labelled record.
    pub split: DeerletSplit,
}

struct Inner {
    config: AnnotationConfig,
    items: Vec<GeneratedRule>,
    labeled: BTreeMap<String, DeerletRecord>,
    /// Rule ids in file order.
    order: Vec<String>,
}

#[derive(Clone)]
pub struct AnnotationState {
    inner: Arc<Mutex<Inner>>,
}

impl AnnotationState {
    /// Loads the candidates and any labels already in the output file.
    pub fn open(config: AnnotationConfig) -> Result<Self, HarnessError> {
        let items: Vec<GeneratedRule> = super::read_rules(&config.candidates_path)?
            .into_iter()
            .filter(|r| !r.prefiltered)
            .collect();
        if let Some(deer) = &config.deer_path {
            let ids: std::collections::BTreeSet<String> = load_deer(deer)?.into_iter().map(|r| r.id).collect();
            if let Some(r) = items.iter().find(|r| !ids.contains(&r.deer_id)) {
                return Err(HarnessError::UnknownRecord(r.deer_id.clone()));
            }
        }
        let existing = match std::fs::metadata(&config.output_path) {
            Ok(m) if m.len() > 0 => load_deerlet(&config.output_path)?,
            _ => Vec::new(),
        };
        let order = existing.iter().map(|r| r.id.clone()).collect();
        let labeled = existing.into_iter().map(|r| (r.id.clone(), r)).collect();
        Ok(AnnotationState {
            inner: Arc::new(Mutex::new(Inner {
                config,
                items,
                labeled,
                order,
            })),
        })
    }
}

fn unprocessable(field: &str, message: String) -> Response {
    (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({"error": message, "field": field}))).into_response()
}

fn internal(e: impl std::fmt::Display) -> Response {
    (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": e.to_string()}))).into_response()
}

async fn items(State(state): State<AnnotationState>) -> Json<Value> {
    let inner = state.inner.lock().expect("state lock");
    let pending: Vec<Value> = inner
        .items
        .iter()
        .filter(|r| !inner.labeled.contains_key(&r.rule_id))
        .map(|r| json!({"rule_id": r.rule_id, "deer_id": r.deer_id, "facts": r.facts, "rule_text": r.text}))
        .collect();
    Json(json!({
        "total": inner.items.len(),
        "labeled": inner.items.iter().filter(|r| inner.labeled.contains_key(&r.rule_id)).count(),
        "items": pending,
    }))
}

/// Field name and message of the first invalid field.
type FieldError = (&'static str, String);

fn label_field(body: &Value, field: &'static str, max: u8) -> Result<u8, FieldError> {
    match body.get(field).map(|v| v.as_u64()) {
        None => Err((field, format!("{field} is required"))),
        Some(Some(v)) if v <= u64::from(max) => Ok(v as u8),
        Some(_) => Err((field, format!("{field} must be an integer in 0..={max}"))),
    }
}

fn parse_labels(body: &Value) -> Result<(String, HumanLabels), FieldError> {
    let rule_id = match body.get("rule_id").and_then(Value::as_str) {
        Some(id) if !id.is_empty() => id.to_string(),
        _ => return Err(("rule_id", "rule_id must be a non-empty string".into())),
    };
    let labels = HumanLabels {
        consistent: label_field(body, "label_consistent", 2)?,
        reality: label_field(body, "label_reality", 2)?,
        general: label_field(body, "label_general", 2)?,
        nontrivial: label_field(body, "label_nontrivial", 1)?,
    };
    Ok((rule_id, labels))
}

fn rewrite(path: &Path, records: &[&DeerletRecord]) -> std::io::Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        for r in records {
            serde_json::to_writer(&mut f, r)?;
            f.write_all(b"\n")?;
        }
        f.sync_all()?;
    }
    std::fs::rename(tmp, path)
}

fn append(path: &Path, record: &DeerletRecord) -> std::io::Result<()> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    f.write_all(&line)?;
    f.sync_data()
}

async fn post_labels(State(state): State<AnnotationState>, Json(body): Json<Value>) -> Response {
    let (rule_id, labels) = match parse_labels(&body) {
        Ok(v) => v,
        Err((field, message)) => return unprocessable(field, message),
    };
    let mut inner = state.inner.lock().expect("state lock");
    let Some(item) = inner.items.iter().find(|r| r.rule_id == rule_id).cloned() else {
        return (StatusCode::NOT_FOUND, Json(json!({"error": format!("unknown rule_id {rule_id}"), "field": "rule_id"})))
            .into_response();
    };
    let record = DeerletRecord {
        id: rule_id.clone(),
        deer_id: item.deer_id,
        facts: item.facts,
        rule_text: item.text,
        label_consistent: labels.consistent,
        label_reality: labels.reality,
        label_general: labels.general,
        label_nontrivial: labels.nontrivial,
        split: inner.config.split,
    };
    let path = inner.config.output_path.clone();
    let replaced = inner.labeled.insert(rule_id.clone(), record.clone()).is_some();
    let written = if replaced {
        warn!("replacing earlier labels for {rule_id}");
        let all: Vec<&DeerletRecord> = inner.order.iter().map(|id| &inner.labeled[id]).collect();
        rewrite(&path, &all)
    } else {
        inner.order.push(rule_id);
        append(&path, &record)
    };
    if let Err(e) = written {
        return internal(e);
    }
    let labeled = inner.items.iter().filter(|r| inner.labeled.contains_key(&r.rule_id)).count();
    Json(json!({"ok": true, "replaced": replaced, "labeled": labeled, "total": inner.items.len()})).into_response()
}

async fn export(State(state): State<AnnotationState>) -> Response {
    let path = state.inner.lock().expect("state lock").config.output_path.clone();
    let bytes = match std::fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return internal(e),
    };
    ([(header::CONTENT_TYPE, "application/x-ndjson")], bytes).into_response()
}

async fn guidelines() -> Json<Value> {
    let aspects: Vec<Value> = GUIDELINES
        .iter()
        .map(|(field, scale, text)| json!({"field": field, "scale": scale, "text": text}))
        .collect();
    Json(json!({ "aspects": aspects }))
}

pub fn router(state: AnnotationState) -> Router {
    let static_dir = state.inner.lock().expect("state lock").config.static_dir.clone();
    let api = Router::new()
        .route("/api/items", get(items))
        .route("/api/labels", post(post_labels))
        .route("/api/export", get(export))
        .route("/api/guidelines", get(guidelines))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, HarnessError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| HarnessError::Server(e.to_string()))
}

/// Serves until Ctrl-C.
pub fn serve_annotation(bind: &str, config: AnnotationConfig) -> Result<(), HarnessError> {
    let app = router(AnnotationState::open(config)?);
    runtime()?.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .map_err(|e| HarnessError::Server(format!("{bind}: {e}")))?;
        info!("annotation server on http://{}", listener.local_addr().map_err(|e| HarnessError::Server(e.to_string()))?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| HarnessError::Server(e.to_string()))
    })
}

/// A server running on a background thread.
pub struct AnnotationServer {
    pub addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl AnnotationServer {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    /// Stops the server and waits for it to finish.
    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for AnnotationServer {
    fn drop(&mut self) {
        self.stop_now();
    }
}

/// Starts a server on `bind` (port 0 picks a free port) and returns once
/// it is accepting connections.
pub fn spawn_annotation_server(bind: &str, config: AnnotationConfig) -> Result<AnnotationServer, HarnessError> {
    let app = router(AnnotationState::open(config)?);
    let rt = runtime()?;
    let listener = rt
        .block_on(tokio::net::TcpListener::bind(bind))
        .map_err(|e| HarnessError::Server(format!("{bind}: {e}")))?;
    let addr = listener.local_addr().map_err(|e| HarnessError::Server(e.to_string()))?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        rt.block_on(async {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
    });
    Ok(AnnotationServer {
        addr,
        stop: Some(tx),
        thread: Some(thread),
    })
}
