//! Gold labels from a note's own headings.
//!
//! A heading whose text is a substring of a label's canonical form, or
//! contains it, opens a section of that label. A heading that matches nothing
//! continues the section before it.

use std::collections::HashSet;
use std::sync::LazyLock;

use super::label::SectionLabel;
use super::{LabeledNote, LabeledSentence, SampleType, SentenceRole};
use crate::error::{Error, Result};
use crate::normalize::{lines_with_offsets, normalize_text, Normalizer, RawNote};

pub const MAX_HEADING_WORDS: usize = 8;

static CANONICAL_FORMS: LazyLock<Vec<(SectionLabel, String)>> = LazyLock::new(|| {
    SectionLabel::ALL
        .into_iter()
        .map(|l| (l, normalize_text(l.as_str())))
        .collect()
});

pub fn is_heading_line(line: &str) -> bool {
    let line = line.trim();
    let words = line.split_whitespace().count();
    if words == 0 || words > MAX_HEADING_WORDS {
        return false;
    }
    let upper = line.chars().any(char::is_alphabetic) && !line.chars().any(char::is_lowercase);
    line.ends_with(':') || upper
}

/// Heading candidates as (line index, trimmed line text), in document order.
pub fn detect_headings(note: &RawNote) -> Vec<(usize, String)> {
    lines_with_offsets(&note.text)
        .enumerate()
        .filter(|(_, (_, line))| is_heading_line(line))
        .map(|(i, (_, line))| (i, line.trim().to_string()))
        .collect()
}

/// Rule 1 lookup. Ties between several matching labels go to the longest
/// canonical form, then to the earlier label.
pub fn match_heading(heading: &str) -> Option<SectionLabel> {
    let heading = normalize_text(heading);
    if heading.is_empty() {
        return None;
    }
    let mut best: Option<(SectionLabel, usize)> = None;
    for (label, form) in CANONICAL_FORMS.iter() {
        if form.contains(heading.as_str()) || heading.contains(form.as_str()) {
            if best.is_none_or(|(_, len)| form.len() > len) {
                best = Some((*label, form.len()));
            }
        }
    }
    best.map(|(l, _)| l)
}

pub fn assign_labels(note: &RawNote) -> Result<LabeledNote> {
    assign_labels_with(&Normalizer::default(), note)
}

/// Labels every sentence of `note` from its headings. Text before the first
/// matched heading is dropped.
pub fn assign_labels_with(normalizer: &Normalizer, note: &RawNote) -> Result<LabeledNote> {
    let headings: HashSet<usize> = detect_headings(note).into_iter().map(|(i, _)| i).collect();
    let mut current = None;
    let mut sentences = Vec::new();
    for (i, (offset, line)) in lines_with_offsets(&note.text).enumerate() {
        let is_heading = headings.contains(&i);
        if is_heading {
            if let Some(label) = match_heading(line) {
                current = Some(label);
            }
        }
        let Some(label) = current else { continue };
        let role = if is_heading {
            SentenceRole::Heading
        } else {
            SentenceRole::Content
        };
        sentences.extend(normalizer.split_line(line, offset).into_iter().map(|s| LabeledSentence {
            tokens: s.tokens,
            label,
            role,
        }));
    }
    if current.is_none() {
        return Err(Error::NoAnchorSection {
            note_id: note.note_id.clone(),
        });
    }
    Ok(LabeledNote {
        note_id: note.note_id.clone(),
        sample_type: SampleType::Type2,
        sentences,
    })
}
