//! Experiment orchestration, reports, and the annotation service.

mod config;
mod human;
mod report;
mod run;
#[cfg(feature = "annotation-server")]
mod server;

use std::path::PathBuf;

use thiserror::Error;

use crate::backend::BackendError;
use crate::baselines::BaselineError;
use crate::corpus::CorpusError;
use crate::pipeline::PipelineError;

pub use config::{BackendConfig, ExperimentConfig, Overrides, System, ThresholdSource};
pub use human::{aggregate_inputs, correlate, human_eval, is_correct, HumanEval, CORRECTNESS_CRITERION};
pub use report::{
    breakdown, build_report, evaluate_rules, group_table, mean_row, summarize, BreakdownKey, EvaluatedRule,
    GroupRow, MetricReport, RunInfo, RunRow,
};
pub use run::{
    aspect_golds, aspect_label, classify_with_majority, classify_with_tfidf, classify_with_verifiers,
    generate_for_record, load_labels, read_rules, write_rules, resolve_thresholds, run_experiment, run_experiment_with, score_deerlet,
    tune_thresholds, write_outputs, ClassificationReport, ClassificationRow, ExperimentOutput, FALLBACK_THRESHOLD,
};
#[cfg(feature = "annotation-server")]
pub use server::{
    router, serve_annotation, spawn_annotation_server, AnnotationConfig, AnnotationServer, AnnotationState,
    GUIDELINES,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("rule refers to unknown record {0}")]
    UnknownRecord(String),
    #[error("retained rules without labels: {}", .0.join(", "))]
    MissingLabels(Vec<String>),
    #[error("server: {0}")]
    Server(String),
}
