//! Natural-language rule templates for the four first-order rule shapes.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RuleType {
    UnivImpl,
    ExistImpl,
    ConjImpl,
    DisjImpl,
}

impl RuleType {
    pub const ALL: [RuleType; 4] = [
        RuleType::UnivImpl,
        RuleType::ExistImpl,
        RuleType::ConjImpl,
        RuleType::DisjImpl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleType::UnivImpl => "UnivImpl",
            RuleType::ExistImpl => "ExistImpl",
            RuleType::ConjImpl => "ConjImpl",
            RuleType::DisjImpl => "DisjImpl",
        }
    }
}

impl fmt::Display for RuleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {rule_type} takes {expected} slots, got {got}")]
    Arity {
        rule_type: RuleType,
        expected: usize,
        got: usize,
    },
    #[error("slot {0} is empty")]
    EmptySlot(usize),
}

/// Slot markers are `<A>`, `<B>`, `<C>` in left-to-right order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleTemplate {
    pub rule_type: RuleType,
    pub surface: String,
    pub slot_count: usize,
}

const MARKERS: [&str; 3] = ["<A>", "<B>", "<C>"];

impl RuleTemplate {
    /// Fixed text between slots: always `slot_count + 1` pieces.
    pub fn fixed_pieces(&self) -> Vec<&str> {
        let mut pieces = Vec::with_capacity(self.slot_count + 1);
        let mut rest = self.surface.as_str();
        for marker in &MARKERS[..self.slot_count] {
            let at = rest.find(marker).expect("template surface carries its markers");
            pieces.push(&rest[..at]);
            rest = &rest[at + marker.len()..];
        }
        pieces.push(rest);
        pieces
    }

    /// The fixed text before the first slot, e.g. `"If"`.
    pub fn lead(&self) -> &str {
        self.fixed_pieces()[0].trim_end()
    }
}

impl fmt::Display for RuleTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.surface)
    }
}

pub fn template_for(rule_type: RuleType) -> RuleTemplate {
    let (surface, slot_count) = match rule_type {
        RuleType::UnivImpl => ("If <A>, then <B>.", 2),
        RuleType::ExistImpl => ("There exists <A>, which <B>.", 2),
        RuleType::ConjImpl => ("If <A> and <B>, then <C>.", 3),
        RuleType::DisjImpl => ("If <A> or <B>, then <C>.", 3),
    };
    RuleTemplate {
        rule_type,
        surface: surface.to_string(),
        slot_count,
    }
}

pub fn fill(template: &RuleTemplate, slots: &[impl AsRef<str>]) -> Result<String, TemplateError> {
    if slots.len() != template.slot_count {
        return Err(TemplateError::Arity {
            rule_type: template.rule_type,
            expected: template.slot_count,
            got: slots.len(),
        });
    }
    let pieces = template.fixed_pieces();
    let mut out = String::from(pieces[0]);
    for (i, slot) in slots.iter().enumerate() {
        let slot = slot.as_ref().trim();
        if slot.is_empty() {
            return Err(TemplateError::EmptySlot(i));
        }
        out.push_str(slot);
        out.push_str(pieces[i + 1]);
    }
    Ok(out)
}

/// Surface-level conformance: the template's fixed words must appear in
/// order (ASCII case-insensitive) with a non-blank span for every slot.
/// Each slot takes the shortest span that lets the next anchor match.
pub fn conforms_to(rule_text: &str, template: &RuleTemplate) -> bool {
    let text = rule_text.trim().to_ascii_lowercase();
    let pieces: Vec<String> = template
        .fixed_pieces()
        .into_iter()
        .map(str::to_ascii_lowercase)
        .collect();
    let (first, rest) = pieces.split_first().expect("at least one piece");
    let (last, middle) = rest.split_last().expect("at least two pieces");

    let Some(mut cursor) = text.strip_prefix(first.as_str()).map(|_| first.len()) else {
        return false;
    };
    for anchor in middle {
        let Some(offset) = find_after_nonblank(&text[cursor..], anchor) else {
            return false;
        };
        cursor += offset + anchor.len();
    }
    let Some(slot) = text[cursor..].strip_suffix(last.as_str()) else {
        return false;
    };
    !slot.trim().is_empty()
}

/// Earliest occurrence of `anchor` in `hay` preceded by non-blank text.
fn find_after_nonblank(hay: &str, anchor: &str) -> Option<usize> {
    let mut from = 0;
    while let Some(rel) = hay[from..].find(anchor) {
        let at = from + rel;
        if !hay[..at].trim().is_empty() {
            return Some(at);
        }
        from = at + hay[at..].chars().next().map_or(1, char::len_utf8);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_surfaces() {
        assert_eq!(template_for(RuleType::UnivImpl).surface, "If <A>, then <B>.");
        assert_eq!(template_for(RuleType::ConjImpl).slot_count, 3);
        let mut surfaces: Vec<_> = RuleType::ALL.iter().map(|t| template_for(*t).surface).collect();
        surfaces.dedup();
        assert_eq!(surfaces.len(), 4);
        for t in RuleType::ALL {
            let tpl = template_for(t);
            assert!(tpl.slot_count >= 2);
            assert_eq!(tpl.fixed_pieces().len(), tpl.slot_count + 1);
        }
    }

    #[test]
    fn fill_univ() {
        let rule = fill(
            &template_for(RuleType::UnivImpl),
            &["a plant is carnivorous", "it probably has a trapping structure"],
        )
        .unwrap();
        assert_eq!(rule, "If a plant is carnivorous, then it probably has a trapping structure.");
    }

    #[test]
    fn fill_errors() {
        let conj = template_for(RuleType::ConjImpl);
        assert_eq!(
            fill(&conj, &["a", "b"]),
            Err(TemplateError::Arity {
                rule_type: RuleType::ConjImpl,
                expected: 3,
                got: 2
            })
        );
        assert_eq!(fill(&conj, &["a", "  ", "c"]), Err(TemplateError::EmptySlot(1)));
    }

    // Matcher behaviour enumerated by hand: rows are probes, columns are
    // UnivImpl, ExistImpl, ConjImpl, DisjImpl.
    #[test]
    fn conformance_table() {
        let probes: [(&str, [bool; 4]); 8] = [
            ("If X, then Y.", [true, false, false, false]),
            ("There exists X, which Y.", [false, true, false, false]),
            ("If A and B, then C.", [true, false, true, false]),
            ("If A or B, then C.", [true, false, false, true]),
            ("if a plant eats insects, THEN it lives in bogs.", [true, false, false, false]),
            ("If , then Y.", [false, false, false, false]),
            ("If X, then Y", [false, false, false, false]),
            ("If A and B or C, then D.", [true, false, true, true]),
        ];
        for (probe, expected) in probes {
            for (rule_type, want) in RuleType::ALL.into_iter().zip(expected) {
                assert_eq!(
                    conforms_to(probe, &template_for(rule_type)),
                    want,
                    "{probe:?} vs {rule_type}"
                );
            }
        }
    }

    #[test]
    fn conformance_is_total() {
        for probe in ["", ".", "If", "If ,", "ünïcödé, then.", "If\u{0}, then \u{0}."] {
            for t in RuleType::ALL {
                let _ = conforms_to(probe, &template_for(t));
            }
        }
    }

    #[test]
    fn lead_words() {
        assert_eq!(template_for(RuleType::ExistImpl).lead(), "There exists");
        assert_eq!(template_for(RuleType::DisjImpl).lead(), "If");
    }
}
