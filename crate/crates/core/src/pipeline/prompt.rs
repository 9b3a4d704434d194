use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModuleId, PipelineError};
use crate::templates::{template_for, RuleTemplate, RuleType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShot {
    #[serde(default)]
    pub facts: Vec<String>,
    pub rule: String,
    #[serde(default)]
    pub rule_type: Option<RuleType>,
    #[serde(default)]
    pub verdict: Option<bool>,
}

/// Which inputs a module's query block carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slots {
    pub facts: bool,
    pub rule: bool,
    pub template: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub module_id: ModuleId,
    pub instruction: String,
    pub examples: Vec<FewShot>,
}

#[derive(Deserialize)]
struct PromptFile {
    instruction: String,
    #[serde(default)]
    examples: Vec<FewShot>,
}

impl PromptSpec {
    pub fn slots(&self) -> Slots {
        slots_for(self.module_id)
    }

    pub fn from_toml(module_id: ModuleId, text: &str) -> Result<Self, PipelineError> {
        let file: PromptFile = toml::from_str(text)
            .map_err(|e| PipelineError::Prompt(format!("{module_id}: {e}")))?;
        let spec = PromptSpec {
            module_id,
            instruction: file.instruction.trim().to_string(),
            examples: file.examples,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), PipelineError> {
        let slots = self.slots();
        let bad = |i: usize, what: &str| {
            PipelineError::Prompt(format!("{} example {}: {what}", self.module_id, i + 1))
        };
        for (i, ex) in self.examples.iter().enumerate() {
            if slots.facts && ex.facts.is_empty() {
                return Err(bad(i, "needs facts"));
            }
            if !slots.facts && !ex.facts.is_empty() {
                return Err(bad(i, "must not carry facts"));
            }
            if slots.template && ex.rule_type.is_none() {
                return Err(bad(i, "needs a rule_type"));
            }
            if slots.rule && ex.verdict.is_none() {
                return Err(bad(i, "needs a verdict"));
            }
        }
        Ok(())
    }

    /// Keeps only the first `n` few-shot blocks.
    pub fn truncated(mut self, n: usize) -> Self {
        self.examples.truncate(n);
        self
    }
}

pub fn slots_for(module: ModuleId) -> Slots {
    match module {
        ModuleId::M1 => Slots { facts: true, rule: false, template: true },
        ModuleId::M2 | ModuleId::M4 => Slots { facts: true, rule: true, template: false },
        ModuleId::M3 | ModuleId::M5 => Slots { facts: false, rule: true, template: false },
    }
}

/// The five module prompts.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    specs: BTreeMap<ModuleId, PromptSpec>,
}

const BUILTIN: [(ModuleId, &str); 5] = [
    (ModuleId::M1, include_str!("../../../../prompts/m1.toml")),
    (ModuleId::M2, include_str!("../../../../prompts/m2.toml")),
    (ModuleId::M3, include_str!("../../../../prompts/m3.toml")),
    (ModuleId::M4, include_str!("../../../../prompts/m4.toml")),
    (ModuleId::M5, include_str!("../../../../prompts/m5.toml")),
];

impl PromptSet {
    /// The prompts shipped in `prompts/`, compiled in.
    pub fn builtin() -> Self {
        let specs = BUILTIN
            .iter()
            .map(|(m, text)| (*m, PromptSpec::from_toml(*m, text).expect("builtin prompts parse")))
            .collect();
        PromptSet { specs }
    }

    /// Reads `m1.toml` .. `m5.toml` from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let dir = dir.as_ref();
        let mut specs = BTreeMap::new();
        for m in ModuleId::ALL {
            let path = dir.join(format!("{}.toml", m.as_str().to_lowercase()));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| PipelineError::Prompt(format!("{}: {e}", path.display())))?;
            specs.insert(m, PromptSpec::from_toml(m, &text)?);
        }
        Ok(PromptSet { specs })
    }

    pub fn with_few_shot_limit(self, n: Option<usize>) -> Self {
        match n {
            None => self,
            Some(n) => PromptSet {
                specs: self.specs.into_iter().map(|(m, s)| (m, s.truncated(n))).collect(),
            },
        }
    }

    pub fn get(&self, module: ModuleId) -> &PromptSpec {
        &self.specs[&module]
    }
}

fn write_facts(out: &mut String, facts: &[String]) {
    out.push_str("Facts:\n");
    for (i, f) in facts.iter().enumerate() {
        let _ = writeln!(out, "{}. {}", i + 1, f.trim());
    }
}

fn yes_no(v: bool) -> &'static str {
    if v {
        "yes"
    } else {
        "no"
    }
}

/// Instruction, then the few-shot blocks, then the query block, separated
/// by blank lines. Proposer queries end with `Rule: <template lead>`;
/// verifier queries end with `Answer:`.
pub fn assemble_prompt(
    spec: &PromptSpec,
    facts: &[String],
    rule: Option<&str>,
    template: Option<&RuleTemplate>,
) -> Result<String, PipelineError> {
    let slots = spec.slots();
    let missing = |slot: &'static str| PipelineError::MissingSlot {
        module: spec.module_id,
        slot,
    };
    if slots.facts && facts.is_empty() {
        return Err(missing("facts"));
    }
    if slots.rule && rule.is_none() {
        return Err(missing("rule"));
    }
    if slots.template && template.is_none() {
        return Err(missing("template"));
    }

    let mut out = String::new();
    out.push_str(spec.instruction.trim());
    out.push_str("\n\n");

    for ex in &spec.examples {
        if slots.facts {
            write_facts(&mut out, &ex.facts);
        }
        if slots.template {
            let tpl = template_for(ex.rule_type.expect("validated on load"));
            let _ = writeln!(out, "Template: {tpl}");
        }
        let _ = writeln!(out, "Rule: {}", ex.rule.trim());
        if slots.rule {
            let _ = writeln!(out, "Answer: {}", yes_no(ex.verdict.expect("validated on load")));
        }
        out.push('\n');
    }

    if slots.facts {
        write_facts(&mut out, facts);
    }
    if let (true, Some(tpl)) = (slots.template, template) {
        let _ = writeln!(out, "Template: {tpl}");
        let _ = write!(out, "Rule: {}", tpl.lead());
    } else {
        let _ = writeln!(out, "Rule: {}", rule.unwrap_or_default().trim());
        out.push_str("Answer:");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    fn facts() -> Vec<String> {
        vec!["Sundews trap flies.".into(), "Pitcher plants drown ants.".into(), "Flytraps snap shut.".into()]
    }

    #[test]
    fn builtin_prompts_match_slots() {
        let set = PromptSet::builtin();
        for m in ModuleId::ALL {
            assert_eq!(set.get(m).module_id, m);
            assert!(!set.get(m).examples.is_empty());
        }
    }

    #[test]
    fn proposer_prompt_ends_with_template_cue() {
        let set = PromptSet::builtin();
        let tpl = template_for(RuleType::UnivImpl);
        let p = assemble_prompt(set.get(ModuleId::M1), &facts(), None, Some(&tpl)).unwrap();
        assert!(p.ends_with("Template: If <A>, then <B>.\nRule: If"), "{p}");
        assert!(p.contains("3. Flytraps snap shut."));
    }

    #[test]
    fn missing_slots() {
        let set = PromptSet::builtin();
        assert!(matches!(
            assemble_prompt(set.get(ModuleId::M3), &facts(), None, None),
            Err(PipelineError::MissingSlot { module: ModuleId::M3, slot: "rule" })
        ));
        assert!(matches!(
            assemble_prompt(set.get(ModuleId::M1), &facts(), None, None),
            Err(PipelineError::MissingSlot { slot: "template", .. })
        ));
    }

    #[test]
    fn deterministic_and_fact_free_for_m3_m5() {
        let set = PromptSet::builtin();
        let rule = Some("If a plant is carnivorous, then it traps insects.");
        let other = vec!["Something else entirely.".to_string()];
        for m in [ModuleId::M3, ModuleId::M5] {
            let a = assemble_prompt(set.get(m), &facts(), rule, None).unwrap();
            let b = assemble_prompt(set.get(m), &other, rule, None).unwrap();
            assert_eq!(a, b);
            assert!(!a.contains("Facts:"));
            assert!(a.ends_with("Answer:"));
        }
        let a = assemble_prompt(set.get(ModuleId::M2), &facts(), rule, None).unwrap();
        assert_eq!(a, assemble_prompt(set.get(ModuleId::M2), &facts(), rule, None).unwrap());
        assert!(a.contains("Sundews"));
    }

    #[test]
    fn few_shot_limit() {
        let set = PromptSet::builtin().with_few_shot_limit(Some(1));
        assert_eq!(set.get(ModuleId::M1).examples.len(), 1);
    }

    #[test]
    fn rejects_facts_on_fact_free_module() {
        let text = "instruction = \"x\"\n[[examples]]\nfacts = [\"f\"]\nrule = \"r\"\nverdict = true\n";
        assert!(PromptSpec::from_toml(ModuleId::M3, text).is_err());
        assert!(PromptSpec::from_toml(ModuleId::M2, text).is_ok());
    }
}
