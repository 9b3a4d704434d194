//! Text-completion backends.
//!
//! Everything above this module talks to a [`CompletionBackend`]: either a
//! remote inference server speaking the JSON completions protocol
//! ([`RemoteBackend`]) or the deterministic [`MockBackend`] used offline.

mod mock;
mod remote;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::tokenize;

pub use mock::{MockBackend, ScriptEntry};
pub use remote::{RemoteBackend, RemoteConfig, RetryPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("network error: {0}")]
    Network(String),
    #[error("request timed out")]
    Timeout,
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no yes/no token among the first-token log-probabilities {0:?}")]
    MissingYesNo(Vec<String>),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Network(_) | BackendError::Timeout)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_new_tokens: usize,
    pub temperature: f64,
    pub stop_sequences: Vec<String>,
    pub want_logprobs: bool,
    pub top_logprob_count: usize,
    /// Sampling seed, forwarded to servers that accept one.
    pub seed: Option<u64>,
}

impl CompletionRequest {
    /// A one-token request asking for the top first-token log-probabilities.
    pub fn classification(prompt: impl Into<String>, seed: Option<u64>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            max_new_tokens: 1,
            temperature: 0.0,
            stop_sequences: Vec::new(),
            want_logprobs: true,
            top_logprob_count: 5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_new_tokens < 1 {
            return Err(BackendError::InvalidRequest("max_new_tokens must be >= 1".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.want_logprobs && self.top_logprob_count < 2 {
            return Err(BackendError::InvalidRequest(
                "top_logprob_count must be >= 2 when log-probabilities are requested".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    /// Token string to natural-log probability for the first generated token.
    pub first_token_logprobs: BTreeMap<String, f64>,
    pub token_count_of_prompt: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerSource {
    Backend,
    /// The backend exposes no tokenizer; counted with [`tokenize`].
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCount {
    pub count: usize,
    pub source: TokenizerSource,
}

pub fn fallback_token_count(text: &str) -> TokenCount {
    TokenCount {
        count: tokenize(text).len(),
        source: TokenizerSource::Fallback,
    }
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;

    fn count_tokens(&self, text: &str) -> Result<TokenCount, BackendError> {
        Ok(fallback_token_count(text))
    }

    /// Upper bound on concurrent requests callers should issue.
    fn max_parallel(&self) -> usize {
        4
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }

    fn count_tokens(&self, text: &str) -> Result<TokenCount, BackendError> {
        (**self).count_tokens(text)
    }

    fn max_parallel(&self) -> usize {
        (**self).max_parallel()
    }
}

pub const YES_VARIANTS: [&str; 4] = ["yes", "Yes", " yes", " Yes"];
pub const NO_VARIANTS: [&str; 4] = ["no", "No", " no", " No"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YesNoScore {
    pub value: f64,
    pub p_yes: f64,
    pub p_no: f64,
}

/// `p_yes / (p_yes + p_no)`, each side summed over its surface variants in
/// probability space.
pub fn yes_no_from_logprobs(logprobs: &BTreeMap<String, f64>) -> Result<YesNoScore, BackendError> {
    let mass = |variants: &[&str]| -> f64 {
        variants
            .iter()
            .filter_map(|v| logprobs.get(*v))
            .map(|lp| lp.exp())
            .sum()
    };
    let (p_yes, p_no) = (mass(&YES_VARIANTS), mass(&NO_VARIANTS));
    if (p_yes + p_no).is_nan() || p_yes + p_no <= 0.0 {
        return Err(BackendError::MissingYesNo(logprobs.keys().cloned().collect()));
    }
    Ok(YesNoScore {
        value: (p_yes / (p_yes + p_no)).clamp(0.0, 1.0),
        p_yes,
        p_no,
    })
}

/// Asks the backend for one token and reads the yes/no ratio off its
/// first-token distribution.
pub fn yes_no_score(
    backend: &dyn CompletionBackend,
    prompt: &str,
    seed: Option<u64>,
) -> Result<YesNoScore, BackendError> {
    let response = backend.complete(&CompletionRequest::classification(prompt, seed))?;
    yes_no_from_logprobs(&response.first_token_logprobs)
}

/// Cuts `text` at the earliest occurrence of any stop sequence.
pub fn truncate_at_stop(text: &str, stops: &[String]) -> String {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    text[..cut].to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(entries: &[(&str, f64)]) -> BTreeMap<String, f64> {
        entries.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn symmetric_is_half() {
        let s = yes_no_from_logprobs(&map(&[("yes", 0.3f64.ln()), ("no", 0.3f64.ln())])).unwrap();
        assert!((s.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn direct_ratio() {
        let s = yes_no_from_logprobs(&map(&[(" yes", 0.9f64.ln()), (" no", 0.1f64.ln())])).unwrap();
        assert!((s.value - 0.9).abs() < 1e-12);
    }

    #[test]
    fn variants_are_summed() {
        let s = yes_no_from_logprobs(&map(&[
            (" yes", 0.2f64.ln()),
            ("Yes", 0.2f64.ln()),
            (" No", 0.1f64.ln()),
            ("maybe", 0.5f64.ln()),
        ]))
        .unwrap();
        assert!((s.value - 0.8).abs() < 1e-12);
    }

    #[test]
    fn missing_tokens() {
        assert!(matches!(
            yes_no_from_logprobs(&map(&[("maybe", -0.1), ("perhaps", -2.0)])),
            Err(BackendError::MissingYesNo(_))
        ));
    }

    #[test]
    fn request_validation() {
        let mut r = CompletionRequest::classification("p", None);
        assert!(r.validate().is_ok());
        r.top_logprob_count = 1;
        assert!(r.validate().is_err());
        r.want_logprobs = false;
        r.max_new_tokens = 0;
        assert!(r.validate().is_err());
    }

    #[test]
    fn stop_truncation() {
        let stops = vec!["\n".to_string(), "###".to_string()];
        assert_eq!(truncate_at_stop("abc###d\ne", &stops), "abc");
        assert_eq!(truncate_at_stop("abc", &stops), "abc");
    }

    #[test]
    fn fallback_counts() {
        assert_eq!(fallback_token_count("").count, 0);
        assert_eq!(fallback_token_count("If a, then b.").count, 6);
    }
}
