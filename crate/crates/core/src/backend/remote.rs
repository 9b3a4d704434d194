use std::collections::BTreeMap;
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    fallback_token_count, truncate_at_stop, BackendError, CompletionBackend, CompletionRequest,
    CompletionResponse, TokenCount, TokenizerSource,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub base_url: String,
    pub completion_path: String,
    /// POST `{"content": text}` here and read back `{"tokens": [...]}`.
    pub tokenize_path: Option<String>,
    /// Environment variable holding the API key, if the server wants one.
    pub api_key_env_var: Option<String>,
    pub auth_header: String,
    pub model_name: String,
    pub timeout_s: f64,
    pub max_parallel: usize,
    pub retry: RetryPolicy,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            base_url: "http://127.0.0.1:8000".into(),
            completion_path: "/v1/completions".into(),
            tokenize_path: None,
            api_key_env_var: None,
            auth_header: "Authorization".into(),
            model_name: "default".into(),
            timeout_s: 60.0,
            max_parallel: 4,
            retry: RetryPolicy::default(),
        }
    }
}

/// Delays before each retry; only network failures and timeouts retry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub backoff_s: Vec<f64>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            backoff_s: vec![0.5, 2.0, 8.0],
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    http: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s))
            .build()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        let api_key = match &config.api_key_env_var {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::InvalidRequest(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        Ok(RemoteBackend {
            config,
            http,
            api_key,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.base_url.trim_end_matches('/'), path)
    }

    fn post_once(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let mut req = self.http.post(self.url(path)).json(body);
        if let Some(key) = &self.api_key {
            req = req.header(self.config.auth_header.as_str(), format!("Bearer {key}"));
        }
        let resp = req.send().map_err(classify)?;
        let status = resp.status();
        let text = resp.text().map_err(classify)?;
        if !status.is_success() {
            return Err(BackendError::Protocol(format!("HTTP {status}: {text}")));
        }
        serde_json::from_str(&text).map_err(|e| BackendError::Protocol(format!("bad JSON: {e}")))
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let mut delays = self.config.retry.backoff_s.iter();
        loop {
            match self.post_once(path, body) {
                Err(e) if e.is_retryable() => match delays.next() {
                    Some(delay) => {
                        warn!("{e}; retrying in {delay}s");
                        std::thread::sleep(Duration::from_secs_f64(*delay));
                    }
                    None => return Err(e),
                },
                other => return other,
            }
        }
    }
}

fn classify(err: reqwest::Error) -> BackendError {
    if err.is_timeout() {
        BackendError::Timeout
    } else if err.is_connect() || err.is_request() || err.is_body() {
        BackendError::Network(err.to_string())
    } else {
        BackendError::Protocol(err.to_string())
    }
}

/// Builds the wire body for a completion request.
pub(crate) fn request_body(model: &str, request: &CompletionRequest) -> Value {
    let mut body = json!({
        "model": model,
        "prompt": request.prompt,
        "max_tokens": request.max_new_tokens,
        "temperature": request.temperature,
        "stop": request.stop_sequences,
    });
    if request.want_logprobs {
        body["logprobs"] = json!(request.top_logprob_count);
    }
    if let Some(seed) = request.seed {
        body["seed"] = json!(seed);
    }
    body
}

/// Reads `choices[0].text`, `choices[0].logprobs.top_logprobs[0]` and
/// `usage.prompt_tokens` from a completions response.
pub(crate) fn parse_response(
    body: &Value,
    request: &CompletionRequest,
) -> Result<CompletionResponse, BackendError> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Protocol("response has no choices".into()))?;
    let text = choice
        .get("text")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Protocol("choice has no text".into()))?;
    let mut first_token_logprobs = BTreeMap::new();
    if request.want_logprobs {
        let top = choice
            .pointer("/logprobs/top_logprobs/0")
            .and_then(Value::as_object)
            .ok_or_else(|| BackendError::Protocol("missing top_logprobs".into()))?;
        for (token, lp) in top {
            let lp = lp
                .as_f64()
                .ok_or_else(|| BackendError::Protocol(format!("non-numeric logprob for {token:?}")))?;
            first_token_logprobs.insert(token.clone(), lp.min(0.0));
        }
        if first_token_logprobs.is_empty() {
            return Err(BackendError::Protocol("empty top_logprobs".into()));
        }
    }
    let token_count_of_prompt = body
        .pointer("/usage/prompt_tokens")
        .and_then(Value::as_u64)
        .map(|n| n as usize)
        .unwrap_or_else(|| fallback_token_count(&request.prompt).count);
    Ok(CompletionResponse {
        text: truncate_at_stop(text, &request.stop_sequences),
        first_token_logprobs,
        token_count_of_prompt,
    })
}

impl CompletionBackend for RemoteBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        let body = request_body(&self.config.model_name, request);
        debug!("POST {} ({} prompt bytes)", self.config.completion_path, request.prompt.len());
        let reply = self.post(&self.config.completion_path, &body)?;
        parse_response(&reply, request)
    }

    fn count_tokens(&self, text: &str) -> Result<TokenCount, BackendError> {
        let Some(path) = &self.config.tokenize_path else {
            return Ok(fallback_token_count(text));
        };
        let reply = self.post(path, &json!({ "content": text }))?;
        let count = reply
            .get("tokens")
            .and_then(Value::as_array)
            .map(Vec::len)
            .or_else(|| reply.get("count").and_then(Value::as_u64).map(|n| n as usize))
            .ok_or_else(|| BackendError::Protocol("tokenize reply has no tokens".into()))?;
        Ok(TokenCount {
            count,
            source: TokenizerSource::Backend,
        })
    }

    fn max_parallel(&self) -> usize {
        self.config.max_parallel.max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_shape() {
        let mut r = CompletionRequest::classification("Is it?", Some(4));
        r.stop_sequences = vec!["\n".into()];
        let body = request_body("gpt-j", &r);
        assert_eq!(body["model"], "gpt-j");
        assert_eq!(body["max_tokens"], 1);
        assert_eq!(body["logprobs"], 5);
        assert_eq!(body["seed"], 4);
        assert_eq!(body["stop"], json!(["\n"]));
    }

    #[test]
    fn parses_choices() {
        let r = CompletionRequest::classification("Is it?", None);
        let body = json!({
            "choices": [{"text": " yes\nmore", "logprobs": {"tokens": [" yes"], "top_logprobs": [{" yes": -0.1, " no": -2.4}]}}],
            "usage": {"prompt_tokens": 7}
        });
        let resp = parse_response(&body, &r).unwrap();
        assert_eq!(resp.token_count_of_prompt, 7);
        assert_eq!(resp.first_token_logprobs.len(), 2);
        assert_eq!(resp.text, " yes\nmore");
    }

    #[test]
    fn missing_choices_is_protocol_error() {
        let r = CompletionRequest::classification("x", None);
        assert!(matches!(parse_response(&json!({}), &r), Err(BackendError::Protocol(_))));
        let no_lp = json!({"choices": [{"text": "yes"}]});
        assert!(matches!(parse_response(&no_lp, &r), Err(BackendError::Protocol(_))));
    }
}
