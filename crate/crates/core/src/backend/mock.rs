use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    fallback_token_count, truncate_at_stop, BackendError, CompletionBackend, CompletionRequest,
    CompletionResponse, TokenCount,
};

/// One scripted behaviour, selected when `pattern` matches the prompt.
///
/// `completions` are picked by `request.seed % len`; `p_yes` (or explicit
/// `logprobs`) fixes the first-token distribution. Missing parts fall back
/// to the seeded generator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub completions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_yes: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<BTreeMap<String, f64>>,
}

/// Deterministic offline backend: a pure function of the prompt, the
/// script, the backend seed and the request seed.
#[derive(Debug, Clone)]
pub struct MockBackend {
    script: Vec<(Regex, ScriptEntry)>,
    seed: u64,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        MockBackend {
            script: Vec::new(),
            seed,
        }
    }

    pub fn with_script(seed: u64, entries: Vec<ScriptEntry>) -> Result<Self, regex::Error> {
        let script = entries
            .into_iter()
            .map(|e| Regex::new(&e.pattern).map(|re| (re, e)))
            .collect::<Result<_, _>>()?;
        Ok(MockBackend { script, seed })
    }

    /// Appends an entry; earlier entries take precedence.
    pub fn push(&mut self, entry: ScriptEntry) -> Result<(), regex::Error> {
        let re = Regex::new(&entry.pattern)?;
        self.script.push((re, entry));
        Ok(())
    }

    fn rng_for(&self, request: &CompletionRequest) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(request.seed.unwrap_or(0).to_le_bytes());
        hasher.update(request.prompt.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}

impl CompletionBackend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        let entry = self
            .script
            .iter()
            .find(|(re, _)| re.is_match(&request.prompt))
            .map(|(_, e)| e);
        let mut rng = self.rng_for(request);

        let text = match entry.filter(|e| !e.completions.is_empty()) {
            Some(e) => {
                let idx = (request.seed.unwrap_or(0) % e.completions.len() as u64) as usize;
                e.completions[idx].clone()
            }
            None => generate_text(&request.prompt, &mut rng),
        };
        let text: String = {
            let cut = truncate_at_stop(&text, &request.stop_sequences);
            let words: Vec<&str> = cut.split(' ').collect();
            if words.len() > request.max_new_tokens {
                words[..request.max_new_tokens].join(" ")
            } else {
                cut
            }
        };

        let first_token_logprobs = if request.want_logprobs {
            match entry {
                Some(ScriptEntry { logprobs: Some(lp), .. }) => lp.clone(),
                Some(ScriptEntry { p_yes: Some(p), .. }) => yes_no_map(*p),
                _ => yes_no_map(rng.random_range(0.01..0.99)),
            }
        } else {
            BTreeMap::new()
        };

        Ok(CompletionResponse {
            text,
            first_token_logprobs,
            token_count_of_prompt: fallback_token_count(&request.prompt).count,
        })
    }

    fn count_tokens(&self, text: &str) -> Result<TokenCount, BackendError> {
        Ok(fallback_token_count(text))
    }
}

fn yes_no_map(p_yes: f64) -> BTreeMap<String, f64> {
    let p_yes = p_yes.clamp(1e-12, 1.0 - 1e-12);
    BTreeMap::from([
        (" yes".to_string(), p_yes.ln()),
        (" no".to_string(), (1.0 - p_yes).ln()),
    ])
}

const SLOT_WORDS: std::ops::RangeInclusive<usize> = 4..=24;

/// Unscripted completion. If the prompt's query block carries a
/// `Template:` line, fills its slots with word spans from that block and
/// drops whatever part of the rule the prompt already ends with; otherwise
/// emits a run of words from the prompt.
fn generate_text(prompt: &str, rng: &mut ChaCha8Rng) -> String {
    let block = prompt.rsplit("\n\n").next().unwrap_or(prompt);
    let vocab: Vec<String> = block
        .lines()
        .filter(|l| !l.starts_with("Template:") && !l.starts_with("Rule:"))
        .flat_map(|l| l.split_whitespace())
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty() && w != "facts" && !w.chars().all(|c| c.is_ascii_digit()))
        .collect();
    let vocab = if vocab.is_empty() {
        vec!["something".to_string()]
    } else {
        vocab
    };
    let span = |rng: &mut ChaCha8Rng| -> String {
        let len = rng.random_range(SLOT_WORDS);
        let start = rng.random_range(0..vocab.len());
        (0..len).map(|i| vocab[(start + i) % vocab.len()].as_str()).collect::<Vec<_>>().join(" ")
    };

    let template = block
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix("Template:"))
        .map(str::trim);
    let Some(template) = template else {
        return span(rng);
    };
    let mut rule = String::new();
    let mut rest = template;
    while let Some(open) = rest.find('<') {
        let Some(close) = rest[open..].find('>') else { break };
        rule.push_str(&rest[..open]);
        rule.push_str(&span(rng));
        rest = &rest[open + close + 1..];
    }
    rule.push_str(rest);

    let cue = block
        .lines()
        .last()
        .and_then(|l| l.strip_prefix("Rule:"))
        .map(str::trim)
        .unwrap_or("");
    match rule.strip_prefix(cue) {
        Some(tail) if !cue.is_empty() => tail.to_string(),
        _ => rule,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::yes_no_score;

    fn request(prompt: &str, seed: u64) -> CompletionRequest {
        CompletionRequest {
            prompt: prompt.into(),
            max_new_tokens: 96,
            temperature: 0.9,
            stop_sequences: vec!["\n\n".into()],
            want_logprobs: true,
            top_logprob_count: 5,
            seed: Some(seed),
        }
    }

    const M1_PROMPT: &str = "Induce a rule.\n\nFacts:\n1. Sundews trap insects with sticky hairs.\n2. Pitcher plants drown insects.\nTemplate: If <A>, then <B>.\nRule: If";

    #[test]
    fn deterministic() {
        let m = MockBackend::new(3);
        assert_eq!(m.complete(&request(M1_PROMPT, 1)).unwrap(), m.complete(&request(M1_PROMPT, 1)).unwrap());
        assert_ne!(m.complete(&request(M1_PROMPT, 1)).unwrap().text, m.complete(&request(M1_PROMPT, 2)).unwrap().text);
    }

    #[test]
    fn fallback_fills_template_after_cue() {
        let m = MockBackend::new(0);
        let text = m.complete(&request(M1_PROMPT, 5)).unwrap().text;
        let rule = format!("If{text}");
        assert!(
            crate::templates::conforms_to(&rule, &crate::templates::template_for(crate::templates::RuleType::UnivImpl)),
            "{rule}"
        );
    }

    #[test]
    fn stop_sequence_respected() {
        let mut m = MockBackend::new(0);
        m.push(ScriptEntry {
            pattern: "stop-test".into(),
            completions: vec!["line one\nline two".into()],
            ..Default::default()
        })
        .unwrap();
        let mut r = request("stop-test", 0);
        r.stop_sequences = vec!["\n".into()];
        assert_eq!(m.complete(&r).unwrap().text, "line one");
    }

    #[test]
    fn logprobs_present_and_normalized() {
        let m = MockBackend::new(9);
        let resp = m.complete(&request("Is this rule fine?\nAnswer:", 0)).unwrap();
        assert!(resp.first_token_logprobs.len() >= 2);
        assert!(resp.first_token_logprobs.values().all(|lp| *lp <= 0.0));
        let s = yes_no_score(&m, "Is this rule fine?\nAnswer:", Some(0)).unwrap();
        assert!((s.p_yes + s.p_no - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scripted_probability() {
        let m = MockBackend::with_script(
            0,
            vec![ScriptEntry {
                pattern: "carnivorous".into(),
                p_yes: Some(0.8),
                ..Default::default()
            }],
        )
        .unwrap();
        let s = yes_no_score(&m, "Rule: If a plant is carnivorous, then ...", None).unwrap();
        assert!((s.value - 0.8).abs() < 1e-12);
    }

    #[test]
    fn counts_with_fallback_tokenizer() {
        let m = MockBackend::new(0);
        let c = m.count_tokens("If a plant is carnivorous, then it traps.").unwrap();
        assert_eq!(c.count, crate::metrics::tokenize("If a plant is carnivorous, then it traps.").len());
        assert_eq!(m.count_tokens("").unwrap().count, 0);
    }
}
