use std::collections::BTreeSet;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{assemble_prompt, GeneratedRule, ModuleId, PipelineError, PromptSet};
use crate::backend::{yes_no_score, BackendError, CompletionBackend, CompletionRequest};
use crate::corpus::FactInput;
use crate::templates::RuleTemplate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposerConfig {
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub stop_sequences: Vec<String>,
    /// Candidates with at most this many tokens are dropped before
    /// verification.
    pub min_tokens: usize,
}

impl Default for ProposerConfig {
    fn default() -> Self {
        ProposerConfig {
            temperature: 0.9,
            max_new_tokens: 96,
            stop_sequences: vec!["\n\n".into()],
            min_tokens: 45,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub rules: Vec<GeneratedRule>,
    /// Candidate index and error for every failed completion.
    pub failures: Vec<(usize, BackendError)>,
}

/// Runs `f` over `items` on at most `limit` threads, preserving order.
pub(crate) fn bounded_map<T, R, F>(limit: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(limit.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| items.par_iter().map(&f).collect())
}

/// Candidate `i` of a proposal made with `seed` is sampled with
/// `seed * k + i`, so seeds never share candidates.
pub fn candidate_seed(seed: u64, k: usize, i: usize) -> u64 {
    seed.wrapping_mul(k as u64).wrapping_add(i as u64)
}

/// Asks the proposer for `k` rules in `template` from `facts`.
#[allow(clippy::too_many_arguments)]
pub fn propose_rules(
    backend: &dyn CompletionBackend,
    prompts: &PromptSet,
    deer_id: &str,
    facts: &FactInput,
    template: &RuleTemplate,
    k: usize,
    seed: u64,
    config: &ProposerConfig,
) -> Result<Proposal, PipelineError> {
    if k == 0 {
        return Err(PipelineError::ZeroCandidates);
    }
    let prompt = assemble_prompt(prompts.get(ModuleId::M1), &facts.texts, None, Some(template))?;
    let cue = template.lead();
    let indices: Vec<usize> = (0..k).collect();
    let results = bounded_map(backend.max_parallel(), &indices, |&i| {
        let request = CompletionRequest {
            prompt: prompt.clone(),
            max_new_tokens: config.max_new_tokens,
            temperature: config.temperature,
            stop_sequences: config.stop_sequences.clone(),
            want_logprobs: false,
            top_logprob_count: 0,
            seed: Some(candidate_seed(seed, k, i)),
        };
        let response = backend.complete(&request)?;
        let text = format!("{cue}{}", response.text).trim().to_string();
        let token_count = backend.count_tokens(&text)?.count;
        Ok::<_, BackendError>(GeneratedRule {
            rule_id: format!("{deer_id}/{}/s{seed}/c{i}", facts.variant),
            deer_id: deer_id.to_string(),
            text,
            facts: facts.texts.clone(),
            variant: Some(facts.variant),
            seed: Some(seed),
            token_count,
            scores: Default::default(),
            combined: None,
            verdict: false,
            prefiltered: token_count <= config.min_tokens,
        })
    });

    let mut proposal = Proposal {
        rules: Vec::with_capacity(k),
        failures: Vec::new(),
    };
    for (i, result) in results.into_iter().enumerate() {
        match result {
            Ok(rule) => proposal.rules.push(rule),
            Err(e) => {
                warn!("{deer_id}: candidate {i} failed: {e}");
                proposal.failures.push((i, e));
            }
        }
    }
    Ok(proposal)
}

/// Yes/no probability that `rule` satisfies `module`'s requirement.
pub fn verify(
    backend: &dyn CompletionBackend,
    prompts: &PromptSet,
    rule: &GeneratedRule,
    facts: &[String],
    module: ModuleId,
    seed: u64,
) -> Result<f64, PipelineError> {
    if !module.is_verifier() {
        return Err(PipelineError::NotAVerifier(module));
    }
    if rule.prefiltered {
        return Err(PipelineError::Prefiltered(rule.rule_id.clone()));
    }
    let prompt = assemble_prompt(prompts.get(module), facts, Some(&rule.text), None)?;
    Ok(yes_no_score(backend, &prompt, Some(seed))?.value)
}

/// Scores every non-prefiltered rule with each module in `modules`
/// against the facts it was induced from, then refreshes `combined`.
/// (rule, module) pairs run concurrently up to the backend's bound.
pub fn score_rules(
    backend: &dyn CompletionBackend,
    prompts: &PromptSet,
    rules: &mut [GeneratedRule],
    modules: &BTreeSet<ModuleId>,
    seed: u64,
) -> Result<(), PipelineError> {
    let jobs: Vec<(usize, ModuleId)> = rules
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.prefiltered)
        .flat_map(|(i, _)| modules.iter().map(move |m| (i, *m)))
        .collect();
    let shared: &[GeneratedRule] = rules;
    let results = bounded_map(backend.max_parallel(), &jobs, |&(i, m)| {
        verify(backend, prompts, &shared[i], &shared[i].facts, m, seed)
    });
    for (&(i, m), score) in jobs.iter().zip(results) {
        rules[i].scores.insert(m, score?);
    }
    for rule in rules.iter_mut() {
        rule.recompute_combined();
    }
    Ok(())
}
