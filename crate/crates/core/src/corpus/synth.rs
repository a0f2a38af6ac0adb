//! Synthetic discharge summaries drawn from a [`SectionGrammar`].

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::grammar::{SectionGrammar, SectionSpec, MANDATORY};
use super::rules::is_heading_line;
use crate::normalize::RawNote;

const UNITS: [&str; 7] = ["mg", "mcg", "mL", "units", "g", "mEq", "mmHg"];

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// `n` notes with ids `note-000000..`. Note `i` depends only on
/// `(grammar, seed, i)`.
pub fn generate_notes(grammar: &SectionGrammar, n: usize, seed: u64) -> Vec<RawNote> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut note = generate_synthetic_note(grammar, splitmix64(seed ^ splitmix64(i as u64)));
            note.note_id = format!("note-{i:06}");
            note
        })
        .collect()
}

pub fn generate_synthetic_note(grammar: &SectionGrammar, seed: u64) -> RawNote {
    let mut gen = Generator {
        grammar,
        rng: ChaCha8Rng::seed_from_u64(seed),
        lines: Vec::new(),
    };
    gen.note();
    RawNote::new(format!("synth-{seed:016x}"), gen.lines.join("\n"))
}

struct Generator<'a> {
    grammar: &'a SectionGrammar,
    rng: ChaCha8Rng,
    lines: Vec<String>,
}

impl Generator<'_> {
    fn note(&mut self) {
        for spec in &self.grammar.sections {
            if !MANDATORY.contains(&spec.label) && !self.rng.random_bool(spec.presence) {
                continue;
            }
            let heading = if !spec.aliases.is_empty() && self.rng.random_bool(self.grammar.generator.alias_rate) {
                spec.aliases.choose(&mut self.rng).expect("non-empty")
            } else {
                &spec.heading
            };
            self.heading(heading);
            self.body(spec);
            if !spec.unmatched.is_empty() && self.rng.random_bool(self.grammar.generator.unmatched_rate) {
                let sub = spec.unmatched.choose(&mut self.rng).expect("non-empty");
                self.heading(sub);
                self.body(spec);
            }
            self.lines.push(String::new());
        }
    }

    fn heading(&mut self, text: &str) {
        let line = if self.rng.random_bool(self.grammar.generator.upper_case_rate) {
            if self.rng.random_bool(0.5) {
                text.to_uppercase()
            } else {
                format!("{}:", text.to_uppercase())
            }
        } else {
            format!("{text}:")
        };
        self.lines.push(line);
    }

    fn body(&mut self, spec: &SectionSpec) {
        let n = self.rng.random_range(spec.sentences[0]..=spec.sentences[1]);
        let per_line = self.grammar.generator.sentences_per_line;
        let mut pending: Vec<String> = Vec::new();
        let mut budget = 0;
        for _ in 0..n {
            if !spec.templates.is_empty() && self.rng.random_bool(spec.template_rate()) {
                let t = spec.templates.choose(&mut self.rng).expect("non-empty").clone();
                let line = self.expand(&t);
                self.content_line(line);
            } else if spec.tabular_rate > 0.0 && self.rng.random_bool(spec.tabular_rate) {
                let line = self.table_row(spec);
                self.content_line(line);
            } else {
                let s = self.prose(spec);
                pending.push(s);
                if budget == 0 {
                    budget = self.rng.random_range(per_line[0]..=per_line[1]);
                }
                if pending.len() >= budget {
                    self.content_line(pending.join(" "));
                    pending.clear();
                    budget = 0;
                }
            }
        }
        if !pending.is_empty() {
            self.content_line(pending.join(" "));
        }
    }

    /// Content must never be mistaken for a heading.
    fn content_line(&mut self, line: String) {
        if is_heading_line(&line) {
            self.lines.push(line.to_lowercase());
        } else {
            self.lines.push(line);
        }
    }

    fn prose(&mut self, spec: &SectionSpec) -> String {
        let g = &self.grammar.generator;
        let [lo, hi] = spec.sentence_length.unwrap_or(g.sentence_length);
        let rate = spec.specific_rate.unwrap_or(g.specific_rate);
        let len = self.rng.random_range(lo..=hi);
        let mut words = Vec::with_capacity(len);
        for _ in 0..len {
            let w = if self.rng.random_bool(rate) {
                spec.words.choose(&mut self.rng).expect("validated non-empty").clone()
            } else {
                self.common_word().to_string()
            };
            words.push(self.expand(&w));
        }
        let mut s = words.join(" ");
        if self.rng.random_bool(0.5) {
            s = capitalize(&s);
        }
        s.push('.');
        s
    }

    /// Zipf-distributed draw from the shared filler vocabulary.
    fn common_word(&mut self) -> &str {
        let words = &self.grammar.generator.common_words;
        let total: f64 = (1..=words.len()).map(|r| 1.0 / r as f64).sum();
        let mut x = self.rng.random::<f64>() * total;
        for (r, w) in words.iter().enumerate() {
            x -= 1.0 / (r + 1) as f64;
            if x <= 0.0 {
                return w;
            }
        }
        words.last().expect("non-empty")
    }

    fn table_row(&mut self, spec: &SectionSpec) -> String {
        let k = self.rng.random_range(spec.tabular_triples[0]..=spec.tabular_triples[1]);
        let mut cells = Vec::with_capacity(k);
        for _ in 0..k {
            let w = spec.words.choose(&mut self.rng).expect("non-empty").clone();
            let w = self.expand(&w);
            let num = self.number();
            let cell = match self.rng.random_range(0..3) {
                0 => format!("{w}-{num}"),
                1 => format!("{w} {num}"),
                _ => format!("{w} {num} {}", UNITS.choose(&mut self.rng).expect("non-empty")),
            };
            cells.push(cell);
        }
        cells.join(" ")
    }

    fn number(&mut self) -> String {
        if self.rng.random_bool(0.5) {
            self.rng.random_range(1..400).to_string()
        } else {
            format!("{}.{}", self.rng.random_range(0..150), self.rng.random_range(0..10))
        }
    }

    fn expand(&mut self, text: &str) -> String {
        text.split(' ')
            .map(|w| self.expand_word(w))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn expand_word(&mut self, w: &str) -> String {
        let Some(rest) = w.strip_prefix('#') else {
            return w.to_string();
        };
        let name_len = rest.chars().take_while(char::is_ascii_lowercase).count();
        let (name, suffix) = rest.split_at(name_len);
        let n = self.rng.random_range(1..10_000);
        let body = match name {
            "num" => self.number(),
            "unit" => UNITS.choose(&mut self.rng).expect("non-empty").to_string(),
            "date" => format!(
                "[**{}-{}-{}**]",
                self.rng.random_range(2100..2200),
                self.rng.random_range(1..13),
                self.rng.random_range(1..29)
            ),
            "name" => {
                let kind = ["Known lastname", "First Name8 (NamePattern2)", "Last Name (NamePattern1)", "Doctor Last Name"]
                    .choose(&mut self.rng)
                    .expect("non-empty");
                format!("[**{kind} {n}**]")
            }
            "loc" => {
                let kind = ["Hospital1", "Hospital", "Location (un)"].choose(&mut self.rng).expect("non-empty");
                format!("[**{kind} {n}**]")
            }
            "phone" => format!("[**Telephone/Fax (1) {n}**]"),
            "id" => format!("[**MD Number(1) {n}**]"),
            _ => return w.to_string(),
        };
        format!("{body}{suffix}")
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::rules::assign_labels;
    use crate::corpus::{SectionLabel, SentenceRole};

    #[test]
    fn same_seed_same_note() {
        let g = SectionGrammar::default();
        assert_eq!(generate_synthetic_note(&g, 0), generate_synthetic_note(&g, 0));
        assert_ne!(generate_synthetic_note(&g, 0).text, generate_synthetic_note(&g, 1).text);
        assert_eq!(generate_notes(&g, 5, 3), generate_notes(&g, 5, 3));
    }

    #[test]
    fn generated_notes_label_cleanly() {
        let g = SectionGrammar::default();
        for note in generate_notes(&g, 200, 11) {
            let labeled = assign_labels(&note).unwrap();
            let labels = labeled.labels();
            assert_eq!(labels[0], SectionLabel::AdmissionDate);
            assert!(labels.contains(&SectionLabel::Sex));
            assert!(labels.contains(&SectionLabel::Service));
            // template order, one run per label
            assert!(labels.windows(2).all(|w| w[0] <= w[1]), "{}", note.text);
        }
    }

    #[test]
    fn heading_lines_are_exactly_the_generated_ones() {
        let g = SectionGrammar::default();
        let note = generate_synthetic_note(&g, 5);
        let labeled = assign_labels(&note).unwrap();
        let headings = labeled.sentences.iter().filter(|s| s.role == SentenceRole::Heading).count();
        let expected = note.text.lines().filter(|l| is_heading_line(l)).count();
        assert_eq!(headings, expected);
        assert!(note.text.lines().any(|l| l == "Admission Date:" || l.starts_with("ADMISSION DATE")));
    }

    #[test]
    fn placeholders_expand_to_masks() {
        let g = SectionGrammar::default();
        let mut gen = Generator {
            grammar: &g,
            rng: ChaCha8Rng::seed_from_u64(1),
            lines: vec![],
        };
        assert!(gen.expand("#date").starts_with("[**21"));
        assert!(gen.expand("#name,").ends_with("**],"));
        assert_eq!(gen.expand("plain words"), "plain words");
        assert_eq!(gen.expand("#unknown"), "#unknown");
    }
}
