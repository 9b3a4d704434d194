use std::collections::HashMap;
use std::sync::LazyLock;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;

static STEMMER: LazyLock<Stemmer> = LazyLock::new(|| Stemmer::create(Algorithm::English));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matcher {
    Exact,
    Stem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeteorParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub matchers: Vec<Matcher>,
}

impl Default for MeteorParams {
    fn default() -> Self {
        MeteorParams {
            alpha: 0.9,
            beta: 3.0,
            gamma: 0.5,
            matchers: vec![Matcher::Exact, Matcher::Stem],
        }
    }
}

impl MeteorParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(format!("alpha {} outside [0,1]", self.alpha));
        }
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(format!("beta {} must be positive", self.beta));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(format!("gamma {} outside [0,1]", self.gamma));
        }
        Ok(())
    }
}

/// Sentence-level METEOR of `candidate` against a single `reference`.
pub fn meteor(candidate: &str, reference: &str, params: &MeteorParams) -> f64 {
    meteor_tokens(&tokenize(candidate), &tokenize(reference), params)
}

pub fn meteor_tokens(candidate: &[String], reference: &[String], params: &MeteorParams) -> f64 {
    let alignment = align(candidate, reference, &params.matchers);
    let matched = alignment.iter().filter(|a| a.is_some()).count();
    if matched == 0 {
        return 0.0;
    }
    let m = matched as f64;
    let precision = m / candidate.len() as f64;
    let recall = m / reference.len() as f64;
    let fmean =
        precision * recall / (params.alpha * precision + (1.0 - params.alpha) * recall);
    let chunks = count_chunks(&alignment) as f64;
    let penalty = params.gamma * (chunks / m).powf(params.beta);
    fmean * (1.0 - penalty)
}

/// Number of maximal runs in which consecutive candidate tokens map to
/// consecutive reference tokens.
pub(crate) fn count_chunks(alignment: &[Option<usize>]) -> usize {
    let mut chunks = 0;
    let mut prev: Option<(usize, usize)> = None;
    for (h, r) in alignment.iter().enumerate() {
        let Some(r) = *r else { continue };
        match prev {
            Some((ph, pr)) if ph + 1 == h && pr + 1 == r => {}
            _ => chunks += 1,
        }
        prev = Some((h, r));
    }
    chunks
}

/// One-to-one alignment from candidate positions to reference positions.
///
/// Each matcher stage only sees tokens left unmatched by earlier stages.
/// Within a stage, candidate tokens are visited from last to first and each
/// takes the latest free reference token with the same key.
pub(crate) fn align(candidate: &[String], reference: &[String], matchers: &[Matcher]) -> Vec<Option<usize>> {
    let mut alignment = vec![None; candidate.len()];
    let mut ref_used = vec![false; reference.len()];
    for matcher in matchers {
        let key = |t: &String| -> String {
            match matcher {
                Matcher::Exact => t.clone(),
                Matcher::Stem => STEMMER.stem(t).into_owned(),
            }
        };
        let mut free: HashMap<String, Vec<usize>> = HashMap::new();
        for (r, t) in reference.iter().enumerate() {
            if !ref_used[r] {
                free.entry(key(t)).or_default().push(r);
            }
        }
        for h in (0..candidate.len()).rev() {
            if alignment[h].is_some() {
                continue;
            }
            if let Some(r) = free.get_mut(&key(&candidate[h])).and_then(Vec::pop) {
                alignment[h] = Some(r);
                ref_used[r] = true;
            }
        }
    }
    alignment
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn identical_three_tokens() {
        let p = MeteorParams::default();
        let s = meteor("the cat sat", "the cat sat", &p);
        assert!((s - (1.0 - 0.5 * (1.0f64 / 3.0).powi(3))).abs() < 1e-12);
    }

    #[test]
    fn single_token() {
        assert!((meteor("cats", "cats", &MeteorParams::default()) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn disjoint_is_zero() {
        assert_eq!(meteor("red apples", "blue sky", &MeteorParams::default()), 0.0);
        assert_eq!(meteor("", "blue sky", &MeteorParams::default()), 0.0);
    }

    #[test]
    fn stem_stage_matches_inflections() {
        let exact_only = MeteorParams {
            matchers: vec![Matcher::Exact],
            ..MeteorParams::default()
        };
        let p = MeteorParams::default();
        assert_eq!(meteor("plants grow", "plant growing", &exact_only), 0.0);
        assert!(meteor("plants grow", "plant growing", &p) > 0.0);
    }

    #[test]
    fn alignment_takes_latest_free_reference_token() {
        let a = align(&toks("the dog"), &toks("the cat the dog"), &[Matcher::Exact]);
        assert_eq!(a, vec![Some(2), Some(3)]);
        assert_eq!(count_chunks(&a), 1);
        // The later "the" wins even though the earlier one would extend the run.
        let b = align(&toks("the cat"), &toks("the cat the"), &[Matcher::Exact]);
        assert_eq!(b, vec![Some(2), Some(1)]);
        assert_eq!(count_chunks(&b), 2);
    }

    #[test]
    fn stem_stage_skips_exact_matches() {
        let a = align(&toks("trap traps"), &toks("traps trapping"), &[Matcher::Exact, Matcher::Stem]);
        assert_eq!(a, vec![Some(1), Some(0)]);
    }

    #[test]
    fn repeated_tokens_get_max_matches() {
        let a = align(&toks("a a a"), &toks("a a"), &[Matcher::Exact]);
        assert_eq!(a.iter().flatten().count(), 2);
        assert_eq!(count_chunks(&a), 1);
    }

    #[test]
    fn params_validation() {
        assert!(MeteorParams::default().validate().is_ok());
        assert!(MeteorParams { beta: 0.0, ..MeteorParams::default() }.validate().is_err());
        assert!(MeteorParams { alpha: 1.5, ..MeteorParams::default() }.validate().is_err());
    }
}
