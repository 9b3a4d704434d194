//! Rule/fact records (DEER) and labelled generated-rule records (DEERLET).
//!
//! Both datasets are stored as JSON Lines, one record per line, with the
//! split carried on each record rather than implied by file position.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::templates::{conforms_to, template_for, RuleType};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: invalid field `{field}`: {message}")]
    Invariant {
        line: usize,
        field: &'static str,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topic {
    Zoology,
    Botany,
    Geology,
    Astronomy,
    History,
    Physics,
}

impl Topic {
    pub const ALL: [Topic; 6] = [
        Topic::Zoology,
        Topic::Botany,
        Topic::Geology,
        Topic::Astronomy,
        Topic::History,
        Topic::Physics,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::Zoology => "zoology",
            Topic::Botany => "botany",
            Topic::Geology => "geology",
            Topic::Astronomy => "astronomy",
            Topic::History => "history",
            Topic::Physics => "physics",
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Specificity {
    Specific,
    General,
}

impl fmt::Display for Specificity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Specificity::Specific => "specific",
            Specificity::General => "general",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeerSplit {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeerletSplit {
    Train,
    Val,
    Test,
}

/// One gold rule with the facts it was induced from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeerRecord {
    pub id: String,
    pub topic: Topic,
    pub rule_type: RuleType,
    pub rule_text: String,
    pub long_facts: Vec<String>,
    pub short_facts: Vec<String>,
    pub fact_specificity: Specificity,
    pub split: DeerSplit,
}

impl DeerRecord {
    fn check(&self, line: usize) -> Result<(), CorpusError> {
        let bad = |field, message: String| CorpusError::Invariant {
            line,
            field,
            message,
        };
        if self.id.trim().is_empty() {
            return Err(bad("id", "must be non-empty".into()));
        }
        if self.long_facts.len() != 3 {
            return Err(bad(
                "long_facts",
                format!("expected 3 facts, found {}", self.long_facts.len()),
            ));
        }
        if self.short_facts.len() != 3 {
            return Err(bad(
                "short_facts",
                format!("expected 3 facts, found {}", self.short_facts.len()),
            ));
        }
        if self.rule_text.trim().is_empty() {
            return Err(bad("rule_text", "must be non-empty".into()));
        }
        if !conforms_to(&self.rule_text, &template_for(self.rule_type)) {
            return Err(bad(
                "rule_text",
                format!("does not match the {} template", self.rule_type),
            ));
        }
        Ok(())
    }
}

/// The four aspect labels attached to a generated rule.
///
/// `consistent`, `reality` and `general` use the 3-point scale
/// (0 false, 1 partially true, 2 true); `nontrivial` is 0/1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanLabels {
    pub consistent: u8,
    pub reality: u8,
    pub general: u8,
    pub nontrivial: u8,
}

impl HumanLabels {
    pub fn new(consistent: u8, reality: u8, general: u8, nontrivial: u8) -> Result<Self, String> {
        let labels = HumanLabels {
            consistent,
            reality,
            general,
            nontrivial,
        };
        labels.validate().map_err(|(field, _)| field.to_string())?;
        Ok(labels)
    }

    /// Returns the offending DEERLET field name and value on failure.
    pub fn validate(&self) -> Result<(), (&'static str, u8)> {
        for (field, value, max) in [
            ("label_consistent", self.consistent, 2),
            ("label_reality", self.reality, 2),
            ("label_general", self.general, 2),
            ("label_nontrivial", self.nontrivial, 1),
        ] {
            if value > max {
                return Err((field, value));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeerletRecord {
    pub id: String,
    pub deer_id: String,
    pub facts: Vec<String>,
    pub rule_text: String,
    pub label_consistent: u8,
    pub label_reality: u8,
    pub label_general: u8,
    pub label_nontrivial: u8,
    pub split: DeerletSplit,
}

impl DeerletRecord {
    pub fn labels(&self) -> HumanLabels {
        HumanLabels {
            consistent: self.label_consistent,
            reality: self.label_reality,
            general: self.label_general,
            nontrivial: self.label_nontrivial,
        }
    }

    fn check(&self, line: usize) -> Result<(), CorpusError> {
        if self.id.trim().is_empty() {
            return Err(CorpusError::Invariant {
                line,
                field: "id",
                message: "must be non-empty".into(),
            });
        }
        if self.rule_text.trim().is_empty() {
            return Err(CorpusError::Invariant {
                line,
                field: "rule_text",
                message: "must be non-empty".into(),
            });
        }
        self.labels()
            .validate()
            .map_err(|(field, value)| CorpusError::Invariant {
                line,
                field,
                message: format!("value {value} out of range"),
            })
    }
}

/// Names the first closed-enum field holding a value outside its enum.
type EnumProbe = fn(&serde_json::Value) -> Option<(&'static str, String)>;

fn probe_field<E: for<'de> Deserialize<'de>>(
    v: &serde_json::Value,
    field: &'static str,
) -> Option<(&'static str, String)> {
    let value = v.get(field)?;
    serde_json::from_value::<E>(value.clone())
        .err()
        .map(|e| (field, format!("{value}: {e}")))
}

fn probe_deer(v: &serde_json::Value) -> Option<(&'static str, String)> {
    probe_field::<Topic>(v, "topic")
        .or_else(|| probe_field::<RuleType>(v, "rule_type"))
        .or_else(|| probe_field::<Specificity>(v, "fact_specificity"))
        .or_else(|| probe_field::<DeerSplit>(v, "split"))
}

fn probe_deerlet(v: &serde_json::Value) -> Option<(&'static str, String)> {
    probe_field::<DeerletSplit>(v, "split")
        .or_else(|| probe_field::<u8>(v, "label_consistent"))
        .or_else(|| probe_field::<u8>(v, "label_reality"))
        .or_else(|| probe_field::<u8>(v, "label_general"))
        .or_else(|| probe_field::<u8>(v, "label_nontrivial"))
}

fn read_jsonl<T, F>(path: &Path, probe: EnumProbe, check: F) -> Result<Vec<T>, CorpusError>
where
    T: for<'de> Deserialize<'de>,
    F: Fn(&T, usize) -> Result<(), CorpusError>,
{
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| CorpusError::Parse {
            line: line_no,
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        if let Some((field, message)) = probe(&value) {
            return Err(CorpusError::Invariant {
                line: line_no,
                field,
                message,
            });
        }
        let record: T = serde_json::from_value(value).map_err(|e| parse(e.to_string()))?;
        check(&record, line_no)?;
        out.push(record);
    }
    Ok(out)
}

pub fn load_deer(path: impl AsRef<Path>) -> Result<Vec<DeerRecord>, CorpusError> {
    read_jsonl(path.as_ref(), probe_deer, DeerRecord::check)
}

pub fn load_deerlet(path: impl AsRef<Path>) -> Result<Vec<DeerletRecord>, CorpusError> {
    read_jsonl(path.as_ref(), probe_deerlet, DeerletRecord::check)
}

/// Writes records as JSON Lines.
pub fn write_jsonl<T: Serialize>(mut w: impl Write, records: &[T]) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut w, record)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

pub fn split_counts(records: &[DeerletRecord]) -> SplitCounts {
    records.iter().fold(SplitCounts::default(), |mut acc, r| {
        match r.split {
            DeerletSplit::Train => acc.train += 1,
            DeerletSplit::Val => acc.val += 1,
            DeerletSplit::Test => acc.test += 1,
        }
        acc
    })
}

/// Which facts of a record are shown to the proposer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactVariant {
    Long1,
    Short1,
    Short2,
    Short3,
    Short3Missing,
}

impl FactVariant {
    pub const ALL: [FactVariant; 5] = [
        FactVariant::Long1,
        FactVariant::Short1,
        FactVariant::Short2,
        FactVariant::Short3,
        FactVariant::Short3Missing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FactVariant::Long1 => "long1",
            FactVariant::Short1 => "short1",
            FactVariant::Short2 => "short2",
            FactVariant::Short3 => "short3",
            FactVariant::Short3Missing => "short3_missing",
        }
    }
}

impl fmt::Display for FactVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FactVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FactVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown fact variant `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactInput {
    pub texts: Vec<String>,
    pub variant: FactVariant,
    pub seed: u64,
}

/// Splits text into sentences at `.`, `!` or `?` followed by whitespace.
/// The terminator stays with its sentence.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            if let Some(&(_, next)) = chars.peek() {
                if next.is_whitespace() {
                    let end = i + c.len_utf8();
                    let sentence = text[start..end].trim();
                    if !sentence.is_empty() {
                        out.push(sentence);
                    }
                    start = end;
                }
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Keeps one half of a fact. `drop_former` discards the first half.
///
/// With `s >= 2` sentences the former half is the first `ceil(s/2)`
/// sentences. A single sentence is halved the same way over its
/// whitespace tokens; a one-word sentence is kept whole.
pub fn keep_half(text: &str, drop_former: bool) -> String {
    let sentences = split_sentences(text);
    let halve = |parts: Vec<&str>| -> String {
        let former = parts.len().div_ceil(2);
        let kept = if drop_former {
            &parts[former..]
        } else {
            &parts[..former]
        };
        kept.join(" ")
    };
    match sentences.len() {
        0 => String::new(),
        1 => {
            let words: Vec<&str> = sentences[0].split_whitespace().collect();
            if words.len() < 2 {
                sentences[0].to_string()
            } else {
                halve(words)
            }
        }
        _ => halve(sentences),
    }
}

pub fn make_fact_variant(record: &DeerRecord, variant: FactVariant, seed: u64) -> FactInput {
    let texts = match variant {
        FactVariant::Long1 => record.long_facts[..1].to_vec(),
        FactVariant::Short1 => record.short_facts[..1].to_vec(),
        FactVariant::Short2 => record.short_facts[..2].to_vec(),
        FactVariant::Short3 => record.short_facts.clone(),
        FactVariant::Short3Missing => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            record
                .short_facts
                .iter()
                .map(|fact| keep_half(fact, rng.random_bool(0.5)))
                .collect()
        }
    };
    FactInput {
        texts,
        variant,
        seed,
    }
}
