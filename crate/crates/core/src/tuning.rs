//! Verifier threshold selection on a labelled validation split.
//!
//! Candidate thresholds are the points of a fixed grid inside
//! [0.05, 0.95]. The global optimum is used when it still rejects at least
//! one example and keeps some positives; otherwise the best local optimum
//! whose recall lies in the configured band is used. Within a run of equally
//! good grid points the middle one is returned.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::THRESHOLD_BOUNDS;

#[derive(Debug, Error, PartialEq)]
pub enum TuneError {
    #[error("scores and golds differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("gold labels need at least one positive and one negative")]
    DegenerateGolds,
    #[error("no threshold qualifies in either global or local mode")]
    NoThreshold,
    #[error("invalid tuning policy: {0}")]
    Policy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    F1,
    Accuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuneMode {
    Global,
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningPolicy {
    pub grid_step: f64,
    pub bounds: (f64, f64),
    /// Primary objective; the other one breaks ties.
    pub objective: Objective,
    pub local_recall_band: (f64, f64),
    /// Require the threshold to reject at least one validation example.
    pub require_rejection: bool,
}

impl Default for TuningPolicy {
    fn default() -> Self {
        TuningPolicy {
            grid_step: 0.01,
            bounds: THRESHOLD_BOUNDS,
            objective: Objective::F1,
            local_recall_band: (0.7, 0.9),
            require_rejection: true,
        }
    }
}

impl TuningPolicy {
    pub fn validate(&self) -> Result<(), TuneError> {
        if !(self.grid_step > 0.0 && self.grid_step < 0.1) {
            return Err(TuneError::Policy(format!("grid_step {} outside (0, 0.1)", self.grid_step)));
        }
        let (lo, hi) = self.bounds;
        if !(THRESHOLD_BOUNDS.0 <= lo && lo < hi && hi <= THRESHOLD_BOUNDS.1) {
            return Err(TuneError::Policy(format!("bounds ({lo}, {hi}) not inside [0.05, 0.95]")));
        }
        Ok(())
    }

    /// Grid points, rounded to 1e-9 so that e.g. 0.30 compares equal to a
    /// score written as 0.3.
    pub fn grid(&self) -> Vec<f64> {
        let (lo, hi) = self.bounds;
        let steps = ((hi - lo) / self.grid_step + 1e-9).floor() as usize;
        (0..=steps)
            .map(|i| ((lo + i as f64 * self.grid_step) * 1e9).round() / 1e9)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub threshold: f64,
    pub objective_value: f64,
    pub recall_at_threshold: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub mode: TuneMode,
}

/// Gold label to binary: any non-zero label (true or partially true)
/// counts as positive, on both the 3-point and 2-point scales.
pub fn binarize_gold(label: u8) -> bool {
    label > 0
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    recall: f64,
    accuracy: f64,
    f1: f64,
    rejects: usize,
}

fn evaluate(scores: &[f64], golds: &[bool], t: f64) -> Cell {
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (s, g) in scores.iter().zip(golds) {
        match (*s >= t, *g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let positives = tp + fneg;
    Cell {
        recall: tp as f64 / positives as f64,
        accuracy: (tp + tn) as f64 / scores.len() as f64,
        f1: if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fneg) as f64 },
        rejects: tn + fneg,
    }
}

impl Cell {
    fn key(&self, objective: Objective) -> (f64, f64) {
        match objective {
            Objective::F1 => (self.f1, self.accuracy),
            Objective::Accuracy => (self.accuracy, self.f1),
        }
    }
}

/// Middle index of the longest run of consecutive indices (first on ties).
fn longest_run_middle(indices: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < indices.len() {
        let mut j = i;
        while j + 1 < indices.len() && indices[j + 1] == indices[j] + 1 {
            j += 1;
        }
        if best.is_none_or(|(a, b)| j - i > b - a) {
            best = Some((i, j));
        }
        i = j + 1;
    }
    best.map(|(a, b)| indices[(a + b) / 2])
}

pub fn tune_threshold(scores: &[f64], golds: &[bool], policy: &TuningPolicy) -> Result<TuneResult, TuneError> {
    policy.validate()?;
    if scores.len() != golds.len() {
        return Err(TuneError::LengthMismatch(scores.len(), golds.len()));
    }
    if golds.iter().all(|g| *g) || golds.iter().all(|g| !*g) {
        return Err(TuneError::DegenerateGolds);
    }
    let grid = policy.grid();
    let cells: Vec<Cell> = grid.iter().map(|t| evaluate(scores, golds, *t)).collect();
    let key = |i: usize| cells[i].key(policy.objective);
    let admissible = |c: &Cell| c.recall > 0.0 && (!policy.require_rejection || c.rejects > 0);
    let result = |i: usize, mode| {
        let c = cells[i];
        TuneResult {
            threshold: grid[i],
            objective_value: c.key(policy.objective).0,
            recall_at_threshold: c.recall,
            accuracy: c.accuracy,
            f1: c.f1,
            mode,
        }
    };

    let best = (0..grid.len()).map(key).fold((f64::MIN, f64::MIN), |a, b| if b > a { b } else { a });
    let global: Vec<usize> = (0..grid.len()).filter(|&i| key(i) == best && admissible(&cells[i])).collect();
    if let Some(i) = longest_run_middle(&global) {
        return Ok(result(i, TuneMode::Global));
    }

    // Local optima: runs of equal objective strictly above both neighbours.
    let (band_lo, band_hi) = policy.local_recall_band;
    let mut chosen: Option<((f64, f64), usize)> = None;
    let mut start = 0;
    while start < grid.len() {
        let mut end = start;
        while end + 1 < grid.len() && key(end + 1) == key(start) {
            end += 1;
        }
        let above_left = start == 0 || key(start - 1) < key(start);
        let above_right = end + 1 == grid.len() || key(end + 1) < key(start);
        if above_left && above_right {
            let qualifying: Vec<usize> = (start..=end)
                .filter(|&i| {
                    let c = &cells[i];
                    admissible(c) && c.recall >= band_lo && c.recall <= band_hi
                })
                .collect();
            if let Some(i) = longest_run_middle(&qualifying) {
                if chosen.is_none_or(|(k, _)| key(start) > k) {
                    chosen = Some((key(start), i));
                }
            }
        }
        start = end + 1;
    }
    chosen
        .map(|(_, i)| result(i, TuneMode::Local))
        .ok_or(TuneError::NoThreshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn separable_set() {
        let scores = [0.9, 0.8, 0.7, 0.2, 0.3];
        let golds = [true, true, true, false, false];
        let r = tune_threshold(&scores, &golds, &TuningPolicy::default()).unwrap();
        assert_eq!(r.mode, TuneMode::Global);
        assert_eq!(r.f1, 1.0);
        assert!(r.threshold > 0.30 && r.threshold <= 0.70);
        // Plateau 0.31..=0.70 has 40 points; the lower middle is 0.50.
        assert!((r.threshold - 0.50).abs() < 1e-9);
    }

    #[test]
    fn identical_scores_have_no_threshold() {
        let r = tune_threshold(&[0.4; 6], &[true, false, true, false, true, false], &TuningPolicy::default());
        assert_eq!(r, Err(TuneError::NoThreshold));
    }

    #[test]
    fn degenerate_golds() {
        assert_eq!(
            tune_threshold(&[0.1, 0.9], &[true, true], &TuningPolicy::default()),
            Err(TuneError::DegenerateGolds)
        );
    }

    #[test]
    fn local_mode_when_global_accepts_everything() {
        // Accepting everything (t <= 0.06) gives the best f1 but rejects
        // nothing, so the local optimum on 0.51..=0.60 (recall 0.7) wins.
        let scores = [0.9, 0.85, 0.8, 0.75, 0.7, 0.65, 0.6, 0.06, 0.06, 0.06, 0.5];
        let golds = [true, true, true, true, true, true, true, true, true, true, false];
        let r = tune_threshold(&scores, &golds, &TuningPolicy::default()).unwrap();
        assert_eq!(r.mode, TuneMode::Local);
        assert!((r.recall_at_threshold - 0.7).abs() < 1e-12);
        assert!((r.threshold - 0.55).abs() < 1e-9);
    }

    #[test]
    fn binarization() {
        assert!(binarize_gold(2));
        assert!(binarize_gold(1));
        assert!(!binarize_gold(0));
    }

    #[test]
    fn grid_points() {
        let g = TuningPolicy::default().grid();
        assert_eq!(g.len(), 91);
        assert_eq!(g[0], 0.05);
        assert_eq!(g[25], 0.3);
        assert_eq!(*g.last().unwrap(), 0.95);
    }

    #[test]
    fn policy_validation() {
        assert!(TuningPolicy { grid_step: 0.2, ..Default::default() }.validate().is_err());
        assert!(TuningPolicy { bounds: (0.0, 1.0), ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant_and_bounded(
            pairs in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..30),
            rot in 0usize..30,
        ) {
            let scores: Vec<f64> = pairs.iter().map(|p| (p.0 * 100.0).round() / 100.0).collect();
            let golds: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            let a = tune_threshold(&scores, &golds, &TuningPolicy::default());
            let mut s2 = scores.clone();
            let mut g2 = golds.clone();
            let k = rot % scores.len();
            s2.rotate_left(k);
            g2.rotate_left(k);
            s2.reverse();
            g2.reverse();
            let b = tune_threshold(&s2, &g2, &TuningPolicy::default());
            prop_assert_eq!(&a, &b);
            if let Ok(r) = a {
                prop_assert!((0.05..=0.95).contains(&r.threshold));
            }
        }

        #[test]
        fn separable_data_is_separated(
            pos in prop::collection::vec(0.55f64..0.95, 1..10),
            neg in prop::collection::vec(0.05f64..0.45, 1..10),
        ) {
            let scores: Vec<f64> = pos.iter().chain(&neg).copied().collect();
            let golds: Vec<bool> = pos.iter().map(|_| true).chain(neg.iter().map(|_| false)).collect();
            let r = tune_threshold(&scores, &golds, &TuningPolicy::default()).unwrap();
            prop_assert!(pos.iter().all(|s| *s >= r.threshold));
            prop_assert!(neg.iter().all(|s| *s < r.threshold));
        }
    }
}
