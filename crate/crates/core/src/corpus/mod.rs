//! Labeled corpora: gold labeling from headings, heading-format variants,
//! corpus composition and the synthetic note generator.

mod grammar;
mod label;
mod rules;
mod sample;
mod synth;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use grammar::{SectionGrammar, SectionSpec};
pub use label::{SectionLabel, NUM_LABELS};
pub use rules::{assign_labels, assign_labels_with, detect_headings, is_heading_line, match_heading, MAX_HEADING_WORDS};
pub use sample::{
    build_corpus, build_corpus_with, compose, label_notes, make_sample, split_train_test, CorpusKind, NoteId,
    SampleType,
};
pub use synth::{generate_notes, generate_synthetic_note};

use crate::error::{Error, PathContext, Result};

/// What a sentence is in its note. Not part of the corpus file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SentenceRole {
    #[default]
    Content,
    Heading,
    Tag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub tokens: Vec<String>,
    pub label: SectionLabel,
    #[serde(skip)]
    pub role: SentenceRole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledNote {
    pub note_id: String,
    pub sample_type: SampleType,
    pub sentences: Vec<LabeledSentence>,
}

impl LabeledNote {
    pub fn labels(&self) -> Vec<SectionLabel> {
        self.sentences.iter().map(|s| s.label).collect()
    }
}

/// Serializes a corpus as JSON Lines, one note per line.
pub fn to_jsonl(notes: &[LabeledNote]) -> String {
    let mut out = String::new();
    for note in notes {
        out.push_str(&serde_json::to_string(note).expect("labeled notes always serialize"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(path: &Path, notes: &[LabeledNote]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_path(path)?);
    w.write_all(to_jsonl(notes).as_bytes()).with_path(path)?;
    w.flush().with_path(path)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<LabeledNote>> {
    let reader = BufReader::new(File::open(path).with_path(path)?);
    let mut notes = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.with_path(path)?;
        if line.trim().is_empty() {
            continue;
        }
        let note: LabeledNote = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if note.sentences.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("note {:?} has no sentences", note.note_id),
            });
        }
        notes.push(note);
    }
    Ok(notes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_schema() {
        let note = LabeledNote {
            note_id: "n1".into(),
            sample_type: SampleType::Type3,
            sentences: vec![LabeledSentence {
                tokens: vec!["family".into(), "history".into()],
                label: SectionLabel::FamilyHistory,
                role: SentenceRole::Heading,
            }],
        };
        let line = to_jsonl(std::slice::from_ref(&note));
        assert_eq!(
            line,
            "{\"note_id\":\"n1\",\"sample_type\":\"type3\",\"sentences\":[{\"tokens\":[\"family\",\"history\"],\"label\":\"family history\"}]}\n"
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        write_jsonl(&path, &[note.clone()]).unwrap();
        let back = read_jsonl(&path).unwrap();
        assert_eq!(back[0].sentences[0].tokens, note.sentences[0].tokens);
        assert_eq!(back[0].sentences[0].role, SentenceRole::Content);
    }

    #[test]
    fn rejects_unknown_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"note_id\":\"a\",\"sample_type\":\"type1\",\"sentences\":[{\"tokens\":[\"x\"],\"label\":\"lab\"}]}\n").unwrap();
        assert!(matches!(read_jsonl(&path), Err(Error::Parse { line: 1, .. })));
    }
}
