use std::collections::HashMap;

use super::tokenize::tokenize;

const MAX_ORDER: usize = 4;
const SMOOTHING_EPSILON: f64 = 1e-9;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU-4 with uniform weights, clipped counts against the
/// per-reference maximum, and the closest-reference brevity penalty.
/// Orders with no matching n-gram contribute a precision of `1e-9`.
pub fn bleu(candidate: &str, references: &[impl AsRef<str>]) -> f64 {
    let cand = tokenize(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r.as_ref())).collect();
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }

    let mut log_sum = 0.0;
    for n in 1..=MAX_ORDER {
        let cand_counts = ngram_counts(&cand, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (gram, c) in ngram_counts(r, n) {
                let slot = max_ref.entry(gram).or_insert(0);
                *slot = (*slot).max(c);
            }
        }
        let clipped: usize = cand_counts
            .iter()
            .map(|(gram, c)| (*c).min(max_ref.get(gram).copied().unwrap_or(0)))
            .sum();
        let total = cand.len().saturating_sub(n - 1);
        let precision = if clipped == 0 || total == 0 {
            SMOOTHING_EPSILON
        } else {
            clipped as f64 / total as f64
        };
        log_sum += precision.ln() / MAX_ORDER as f64;
    }

    let c = cand.len() as f64;
    // Closest reference length; ties go to the shorter reference.
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|len| ((*len as i64 - cand.len() as i64).abs(), *len))
        .unwrap() as f64;
    let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    brevity * log_sum.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sentence() {
        let s = "if a plant is carnivorous then it probably has a trapping structure";
        assert!((bleu(s, &[s]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_candidate() {
        assert_eq!(bleu("", &["a b c"]), 0.0);
    }

    #[test]
    fn brevity_penalty_three_vs_six() {
        // Every n-gram of the 3-token candidate occurs in the reference, so
        // p1..p3 = 1 and p4 falls back to epsilon (no 4-grams).
        let got = bleu("a b c", &["a b c d e f"]);
        let expected = (1.0f64 - 6.0 / 3.0).exp() * (1e-9f64.ln() / 4.0).exp();
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");

        // Seven-token candidate fully inside a longer reference: only BP < 1.
        let ref_text = "w1 w2 w3 w4 w5 w6 w7 w8 w9 w10";
        let got = bleu("w1 w2 w3 w4 w5 w6 w7", &[ref_text]);
        assert!((got - (1.0f64 - 10.0 / 7.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn clipping() {
        // "the the the the" vs "the cat": p1 = 1/4.
        let s = bleu("the the the the", &["the cat"]);
        assert!(s > 0.0 && s < 1e-5);
    }
}
