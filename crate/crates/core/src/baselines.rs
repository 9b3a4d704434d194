//! Non-neural comparison systems: random template filling, TF-IDF pair
//! similarity, and the always-yes classifier.

use std::collections::{BTreeMap, HashSet};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{split_sentences, DeerletRecord, FactInput};
use crate::metrics::tokenize;
use crate::templates::{fill, RuleTemplate, TemplateError};

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("the facts yield no fragments to fill the template with")]
    EmptyPool,
    #[error("cannot fit a TF-IDF model on an empty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Template(#[from] TemplateError),
}

fn strip_fragment(s: &str) -> &str {
    s.trim()
        .trim_end_matches(['.', '!', '?', ';', ':', ','])
        .trim()
}

/// Every sentence of every fact, plus the comma-delimited clauses of
/// sentences that have more than one. Terminal punctuation is stripped and
/// duplicates are dropped, keeping first occurrences.
pub fn fragment_pool(facts: &[String]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut pool = Vec::new();
    let mut push = |s: &str| {
        let s = strip_fragment(s);
        if !s.is_empty() && seen.insert(s.to_string()) {
            pool.push(s.to_string());
        }
    };
    for fact in facts {
        for sentence in split_sentences(fact) {
            push(sentence);
            let clauses: Vec<&str> = sentence.split(',').collect();
            if clauses.len() > 1 {
                clauses.into_iter().for_each(&mut push);
            }
        }
    }
    pool
}

/// Fills `template` with fragments drawn from the facts: without
/// replacement when the pool is large enough, with replacement otherwise.
pub fn random_fill_rule(facts: &FactInput, template: &RuleTemplate, seed: u64) -> Result<String, BaselineError> {
    let pool = fragment_pool(&facts.texts);
    if pool.is_empty() {
        return Err(BaselineError::EmptyPool);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<&String> = if pool.len() >= template.slot_count {
        pool.choose_multiple(&mut rng, template.slot_count).collect()
    } else {
        (0..template.slot_count)
            .map(|_| pool.choose(&mut rng).expect("pool is non-empty"))
            .collect()
    };
    Ok(fill(template, &picks)?)
}

/// Document-frequency statistics of a training corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: BTreeMap<String, f64>,
    pub document_count: usize,
}

fn terms(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .collect()
}

/// Smoothed idf: `ln((1 + N) / (1 + df)) + 1`.
pub fn tfidf_fit(corpus: &[impl AsRef<str>]) -> Result<TfidfModel, BaselineError> {
    if corpus.is_empty() {
        return Err(BaselineError::EmptyCorpus);
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus {
        let unique: HashSet<String> = terms(doc.as_ref()).into_iter().collect();
        for t in unique {
            *df.entry(t).or_default() += 1;
        }
    }
    let n = corpus.len() as f64;
    let vocabulary = df.keys().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    let idf = df
        .into_iter()
        .map(|(t, d)| (t, ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0))
        .collect();
    Ok(TfidfModel {
        vocabulary,
        idf,
        document_count: corpus.len(),
    })
}

impl TfidfModel {
    /// idf of a term; unseen terms get `ln(1 + N) + 1`.
    pub fn idf_of(&self, term: &str) -> f64 {
        self.idf
            .get(term)
            .copied()
            .unwrap_or_else(|| (1.0 + self.document_count as f64).ln() + 1.0)
    }

    /// tf-idf weights with tf = count / document length.
    pub fn vectorize(&self, text: &str) -> BTreeMap<String, f64> {
        let tokens = terms(text);
        let len = tokens.len() as f64;
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        counts
            .into_iter()
            .map(|(t, c)| {
                let w = c as f64 / len * self.idf_of(&t);
                (t, w)
            })
            .collect()
    }
}

/// Cosine similarity of the two texts' tf-idf vectors; 0 when either text
/// has no terms.
pub fn tfidf_score(fact_text: &str, rule_text: &str, model: &TfidfModel) -> f64 {
    let a = model.vectorize(fact_text);
    let b = model.vectorize(rule_text);
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    if a == b {
        return 1.0;
    }
    let dot: f64 = a.iter().filter_map(|(t, w)| b.get(t).map(|v| w * v)).sum();
    let norm = |v: &BTreeMap<String, f64>| v.values().map(|w| w * w).sum::<f64>().sqrt();
    (dot / (norm(&a) * norm(&b))).clamp(0.0, 1.0)
}

/// Scores a (facts, rule) pair: the facts are joined into one text.
pub fn tfidf_pair_score(facts: &[String], rule_text: &str, model: &TfidfModel) -> f64 {
    tfidf_score(&facts.join(" "), rule_text, model)
}

/// Training documents for the TF-IDF baseline: every fact text and every
/// rule text of the given records, one document each.
pub fn tfidf_corpus(records: &[DeerletRecord]) -> Vec<String> {
    records
        .iter()
        .flat_map(|r| r.facts.iter().cloned().chain(std::iter::once(r.rule_text.clone())))
        .collect()
}

/// Always predicts the positive class.
pub fn majority_classify(n: usize) -> Vec<bool> {
    vec![true; n]
}
