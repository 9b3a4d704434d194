use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Weights of the ten METEOR-ranked blocks, best block first.
pub const BLOCK_WEIGHTS: [f64; 10] = [45.0, 35.0, 25.0, 15.0, 5.0, -5.0, -15.0, -25.0, -35.0, -45.0];
const BLOCKS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRule {
    pub rule_id: String,
    pub meteor: f64,
    pub retained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WRecallBreakdown {
    pub block_weights: Vec<f64>,
    pub block_recalls: Vec<f64>,
    pub block_sizes: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum WRecallError {
    #[error("weighted recall needs at least 10 rules, got {0}")]
    TooFewRules(usize),
    #[error("rule {0} has a non-finite METEOR score")]
    NonFinite(String),
}

/// Ranks rules by METEOR (stable, descending), cuts the ranking into ten
/// contiguous blocks and combines the per-block retention rates with
/// linearly decreasing weights, rescaled to [0, 1].
///
/// The first `n % 10` blocks hold one extra rule, so every block is
/// non-empty and keeping all (or none) of the rules yields exactly 0.5.
pub fn wrecall(rules: &[ScoredRule]) -> Result<WRecallBreakdown, WRecallError> {
    let n = rules.len();
    if n < BLOCKS {
        return Err(WRecallError::TooFewRules(n));
    }
    if let Some(bad) = rules.iter().find(|r| !r.meteor.is_finite()) {
        return Err(WRecallError::NonFinite(bad.rule_id.clone()));
    }
    let mut order: Vec<&ScoredRule> = rules.iter().collect();
    order.sort_by(|a, b| b.meteor.total_cmp(&a.meteor));

    let base = n / BLOCKS;
    let extra = n % BLOCKS;
    let mut block_sizes = Vec::with_capacity(BLOCKS);
    let mut block_recalls = Vec::with_capacity(BLOCKS);
    let mut start = 0;
    for i in 0..BLOCKS {
        let size = base + usize::from(i < extra);
        let kept = order[start..start + size].iter().filter(|r| r.retained).count();
        block_sizes.push(size);
        block_recalls.push(kept as f64 / size as f64);
        start += size;
    }
    let weighted: f64 = BLOCK_WEIGHTS.iter().zip(&block_recalls).map(|(w, r)| w * r).sum();
    let value = ((weighted + 125.0) / 250.0).clamp(0.0, 1.0);
    Ok(WRecallBreakdown {
        block_weights: BLOCK_WEIGHTS.to_vec(),
        block_recalls,
        block_sizes,
        value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rules(n: usize, keep: impl Fn(usize) -> bool) -> Vec<ScoredRule> {
        // Descending METEOR in input order, so rank == index.
        (0..n)
            .map(|i| ScoredRule {
                rule_id: format!("r{i}"),
                meteor: 1.0 - i as f64 / n as f64,
                retained: keep(i),
            })
            .collect()
    }

    #[test]
    fn identities() {
        assert_eq!(wrecall(&rules(37, |_| true)).unwrap().value, 0.5);
        assert_eq!(wrecall(&rules(37, |_| false)).unwrap().value, 0.5);
        assert!((wrecall(&rules(100, |i| i < 10)).unwrap().value - 0.68).abs() < 1e-12);
        assert!((wrecall(&rules(100, |i| i >= 90)).unwrap().value - 0.32).abs() < 1e-12);
    }

    #[test]
    fn too_few() {
        assert_eq!(wrecall(&rules(9, |_| true)), Err(WRecallError::TooFewRules(9)));
    }

    #[test]
    fn remainder_goes_to_leading_blocks() {
        let b = wrecall(&rules(23, |_| true)).unwrap();
        assert_eq!(b.block_sizes, vec![3, 3, 3, 2, 2, 2, 2, 2, 2, 2]);
    }

    #[test]
    fn ties_keep_input_order() {
        let mut rs = rules(10, |i| i == 0);
        for r in &mut rs {
            r.meteor = 0.3;
        }
        // The first input rule stays in the top block.
        assert!((wrecall(&rs).unwrap().value - (45.0 + 125.0) / 250.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn moving_retention_up_increases(n_per in 1usize..8, from in 1usize..10, to_off in 1usize..10) {
            let n = n_per * 10;
            let j = from;
            let i = j.saturating_sub(to_off);
            prop_assume!(i < j);
            let before = wrecall(&rules(n, |k| k == j * n_per)).unwrap().value;
            let after = wrecall(&rules(n, |k| k == i * n_per)).unwrap().value;
            prop_assert!(after > before);
        }
    }
}
