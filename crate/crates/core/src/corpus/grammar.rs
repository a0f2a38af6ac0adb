use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::label::SectionLabel;
use super::rules::{is_heading_line, match_heading};
use crate::error::{Error, PathContext, Result};

const DEFAULT_GRAMMAR: &str = include_str!("../../resources/default_grammar.toml");

/// Labels every generated note carries.
pub const MANDATORY: [SectionLabel; 3] = [SectionLabel::AdmissionDate, SectionLabel::Sex, SectionLabel::Service];

/// Parameters of the synthetic note generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionGrammar {
    pub generator: GeneratorParams,
    #[serde(rename = "section")]
    pub sections: Vec<SectionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    /// Filler vocabulary shared by all sections, most frequent first.
    pub common_words: Vec<String>,
    /// Probability that a prose token comes from the section's own pool.
    pub specific_rate: f64,
    /// Token count range of a prose sentence.
    pub sentence_length: [usize; 2],
    pub sentences_per_line: [usize; 2],
    /// Probability of a Rule-1 alias in place of the canonical heading.
    pub alias_rate: f64,
    /// Probability that a section with unmatched aliases gets a subsection.
    pub unmatched_rate: f64,
    pub upper_case_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionSpec {
    pub label: SectionLabel,
    pub presence: f64,
    pub sentences: [usize; 2],
    pub heading: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    /// Headings that match no label; their text belongs to this section.
    #[serde(default)]
    pub unmatched: Vec<String>,
    #[serde(default)]
    pub words: Vec<String>,
    #[serde(default)]
    pub templates: Vec<String>,
    #[serde(default)]
    pub template_rate: Option<f64>,
    #[serde(default)]
    pub tabular_rate: f64,
    #[serde(default = "default_triples")]
    pub tabular_triples: [usize; 2],
    #[serde(default)]
    pub sentence_length: Option<[usize; 2]>,
    /// Overrides the generator-wide rate for this section.
    #[serde(default)]
    pub specific_rate: Option<f64>,
}

fn default_triples() -> [usize; 2] {
    [4, 12]
}

impl SectionSpec {
    pub fn template_rate(&self) -> f64 {
        self.template_rate
            .unwrap_or(if self.words.is_empty() { 1.0 } else { 0.0 })
    }
}

impl Default for SectionGrammar {
    fn default() -> Self {
        SectionGrammar::from_toml_str(DEFAULT_GRAMMAR).expect("embedded grammar is valid")
    }
}

fn check_range(what: &str, r: [usize; 2]) -> Result<()> {
    if r[0] == 0 || r[0] > r[1] {
        return Err(Error::Grammar(format!("{what}: bad range {r:?}")));
    }
    Ok(())
}

fn check_prob(what: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Grammar(format!("{what}: probability {p} not in [0, 1]")));
    }
    Ok(())
}

impl SectionGrammar {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let g: SectionGrammar = toml::from_str(s).map_err(|e| Error::Grammar(e.to_string()))?;
        g.validate()?;
        Ok(g)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path).with_path(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("grammar serializes")
    }

    pub fn section(&self, label: SectionLabel) -> Option<&SectionSpec> {
        self.sections.iter().find(|s| s.label == label)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.generator;
        if g.common_words.is_empty() {
            return Err(Error::Grammar("common_words is empty".into()));
        }
        check_prob("specific_rate", g.specific_rate)?;
        check_prob("alias_rate", g.alias_rate)?;
        check_prob("unmatched_rate", g.unmatched_rate)?;
        check_prob("upper_case_rate", g.upper_case_rate)?;
        check_range("sentence_length", g.sentence_length)?;
        check_range("sentences_per_line", g.sentences_per_line)?;

        let mut last: Option<SectionLabel> = None;
        let mut unmatched_seen = HashSet::new();
        for s in &self.sections {
            let name = s.label.as_str();
            if last.is_some_and(|l| l >= s.label) {
                return Err(Error::Grammar(format!("section {name:?} out of canonical order or repeated")));
            }
            last = Some(s.label);
            check_prob(name, s.presence)?;
            check_prob(name, s.tabular_rate)?;
            check_prob(name, s.template_rate())?;
            check_range(name, s.sentences)?;
            check_range(name, s.tabular_triples)?;
            if let Some(r) = s.sentence_length {
                check_range(name, r)?;
            }
            if let Some(p) = s.specific_rate {
                check_prob(name, p)?;
            }
            if s.words.is_empty() && s.templates.is_empty() {
                return Err(Error::Grammar(format!("section {name:?} has neither words nor templates")));
            }
            if s.words.is_empty() && (s.template_rate() < 1.0 || s.tabular_rate > 0.0) {
                return Err(Error::Grammar(format!("section {name:?} needs words for prose or tables")));
            }
            for h in std::iter::once(&s.heading).chain(&s.aliases) {
                if match_heading(h) != Some(s.label) {
                    return Err(Error::Grammar(format!("heading {h:?} does not match {name:?} by substring")));
                }
                check_heading_shape(h)?;
            }
            for h in &s.unmatched {
                if let Some(l) = match_heading(h) {
                    return Err(Error::Grammar(format!("unmatched alias {h:?} matches {l:?}")));
                }
                if !unmatched_seen.insert(h.to_lowercase()) {
                    return Err(Error::Grammar(format!("unmatched alias {h:?} listed twice")));
                }
                check_heading_shape(h)?;
            }
        }
        for m in MANDATORY {
            if self.section(m).is_none() {
                return Err(Error::Grammar(format!("mandatory section {:?} missing", m.as_str())));
            }
        }
        Ok(())
    }
}

fn check_heading_shape(h: &str) -> Result<()> {
    if !is_heading_line(&format!("{h}:")) || !is_heading_line(&h.to_uppercase()) {
        return Err(Error::Grammar(format!("heading {h:?} would not be detected")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grammar_is_valid() {
        let g = SectionGrammar::default();
        assert_eq!(g.sections.len(), 25);
        let back = SectionGrammar::from_toml_str(&g.to_toml_string()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn rejects_misfiled_aliases() {
        let mut g = SectionGrammar::default();
        g.sections[14].aliases.push("Admission".into());
        assert!(matches!(g.validate(), Err(Error::Grammar(_))));

        let mut g = SectionGrammar::default();
        g.sections[14].unmatched.push("Family".into());
        assert!(g.validate().is_err());
    }

    #[test]
    fn rejects_out_of_order_sections() {
        let mut g = SectionGrammar::default();
        g.sections.swap(3, 4);
        assert!(g.validate().is_err());
        let mut g = SectionGrammar::default();
        g.sections.retain(|s| s.label != SectionLabel::Sex);
        assert!(g.validate().is_err());
    }

    #[test]
    fn rejects_bad_numbers() {
        let mut g = SectionGrammar::default();
        g.sections[0].presence = 1.5;
        assert!(g.validate().is_err());
        let mut g = SectionGrammar::default();
        g.generator.sentence_length = [5, 2];
        assert!(g.validate().is_err());
        assert!(SectionGrammar::from_toml_str("[generator]\nfoo = 1").is_err());
    }
}
