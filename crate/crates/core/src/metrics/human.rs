use crate::corpus::HumanLabels;

/// Geometric mean of METEOR (on the x100 scale used in reports) and
/// weighted recall.
pub fn green(meteor_scaled: f64, wrecall: f64) -> f64 {
    (meteor_scaled * wrecall).max(0.0).sqrt()
}

/// Maps a label onto [0, 1]: 3-point scale {0, 0.5, 1}, 2-point {0, 1}.
pub fn normalize_label(value: u8, max: u8) -> f64 {
    f64::from(value.min(max)) / f64::from(max)
}

/// Overall human score: product of the four normalized aspect labels.
pub fn aggregate_human(labels: &HumanLabels) -> f64 {
    normalize_label(labels.consistent, 2)
        * normalize_label(labels.reality, 2)
        * normalize_label(labels.general, 2)
        * normalize_label(labels.nontrivial, 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(c: u8, r: u8, g: u8, t: u8) -> HumanLabels {
        HumanLabels { consistent: c, reality: r, general: g, nontrivial: t }
    }

    #[test]
    fn green_table_rows() {
        assert!((green(25.28, 0.50) - 3.56).abs() <= 0.01);
        assert!((green(26.44, 0.54) - 3.78).abs() <= 0.01);
        assert_eq!(green(12.0, 0.0), 0.0);
    }

    #[test]
    fn aggregate() {
        assert_eq!(aggregate_human(&labels(2, 2, 2, 1)), 1.0);
        assert_eq!(aggregate_human(&labels(2, 1, 2, 1)), 0.5);
        assert_eq!(aggregate_human(&labels(2, 1, 1, 1)), 0.25);
        assert_eq!(aggregate_human(&labels(0, 2, 2, 1)), 0.0);
        assert_eq!(aggregate_human(&labels(2, 2, 2, 0)), 0.0);
    }

    #[test]
    fn aggregate_is_monotone() {
        let all: Vec<HumanLabels> = (0..3)
            .flat_map(|c| (0..3).flat_map(move |r| (0..3).flat_map(move |g| (0..2).map(move |t| labels(c, r, g, t)))))
            .collect();
        for a in &all {
            for b in &all {
                let dominated = a.consistent <= b.consistent
                    && a.reality <= b.reality
                    && a.general <= b.general
                    && a.nontrivial <= b.nontrivial;
                if dominated {
                    assert!(aggregate_human(a) <= aggregate_human(b));
                }
            }
        }
    }
}
