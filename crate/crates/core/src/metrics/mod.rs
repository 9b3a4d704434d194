//! Scoring: text similarity (METEOR, BLEU), retention-weighted recall,
//! human-label aggregation, classification metrics and correlation.

mod bleu;
mod classification;
mod human;
mod meteor;
mod stats;
mod tokenize;
mod wrecall;

pub use bleu::bleu;
pub use classification::{average_precision, classification_metrics, ClassificationMetrics};
pub use human::{aggregate_human, green, normalize_label};
pub use meteor::{meteor, meteor_tokens, MeteorParams, Matcher};
pub use stats::{ln_gamma, pearson, regularized_incomplete_beta, student_t_two_tailed, CorrelationResult, StatsError};
pub use tokenize::tokenize;
pub use wrecall::{wrecall, ScoredRule, WRecallBreakdown, WRecallError, BLOCK_WEIGHTS};
