//! Heading-format variants of a labeled note and corpus composition.

use std::collections::BTreeSet;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rules::assign_labels_with;
use super::{LabeledNote, LabeledSentence, SentenceRole};
use crate::error::{Error, Result};
use crate::normalize::{Normalizer, RawNote};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleType {
    /// Original headings removed.
    Type1,
    /// Original headings kept.
    Type2,
    /// Headings replaced by the canonical label text.
    Type3,
    /// Every section wrapped in opening and closing label tags.
    Type4,
}

impl SampleType {
    pub const ALL: [SampleType; 4] = [SampleType::Type1, SampleType::Type2, SampleType::Type3, SampleType::Type4];

    pub fn name(self) -> &'static str {
        match self {
            SampleType::Type1 => "type1",
            SampleType::Type2 => "type2",
            SampleType::Type3 => "type3",
            SampleType::Type4 => "type4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusKind {
    /// Every note as Type2.
    HeadingsOnly,
    /// Every note as Type1.
    NoHeadings,
    /// The four types in equal shares, assigned at random.
    Mixed,
}

impl CorpusKind {
    pub const ALL: [CorpusKind; 3] = [CorpusKind::HeadingsOnly, CorpusKind::NoHeadings, CorpusKind::Mixed];

    pub fn name(self) -> &'static str {
        match self {
            CorpusKind::HeadingsOnly => "headings-only",
            CorpusKind::NoHeadings => "no-headings",
            CorpusKind::Mixed => "mixed",
        }
    }

    pub fn parse(s: &str) -> Result<CorpusKind> {
        CorpusKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown corpus kind {s:?}")))
    }
}

fn open_tag(label: super::SectionLabel) -> Vec<String> {
    let mut t = vec!["<".to_string()];
    t.extend(label.tokens());
    t.push(">".to_string());
    t
}

fn close_tag(label: super::SectionLabel) -> Vec<String> {
    let mut t = vec!["</".to_string()];
    t.extend(label.tokens());
    t.push(">".to_string());
    t
}

/// Renders an original-headings note in the requested heading format.
/// Content sentences and their labels are the same in every format.
pub fn make_sample(labeled: &LabeledNote, sample_type: SampleType) -> LabeledNote {
    let sentences = match sample_type {
        SampleType::Type1 => labeled
            .sentences
            .iter()
            .filter(|s| s.role != SentenceRole::Heading)
            .cloned()
            .collect(),
        SampleType::Type2 => labeled.sentences.clone(),
        SampleType::Type3 => labeled
            .sentences
            .iter()
            .map(|s| match s.role {
                SentenceRole::Heading => LabeledSentence {
                    tokens: s.label.tokens(),
                    ..s.clone()
                },
                _ => s.clone(),
            })
            .collect(),
        SampleType::Type4 => {
            let mut out = Vec::with_capacity(labeled.sentences.len() + 8);
            for run in labeled.sentences.chunk_by(|a, b| a.label == b.label) {
                let label = run[0].label;
                out.push(LabeledSentence {
                    tokens: open_tag(label),
                    label,
                    role: SentenceRole::Tag,
                });
                out.extend(run.iter().cloned());
                out.push(LabeledSentence {
                    tokens: close_tag(label),
                    label,
                    role: SentenceRole::Tag,
                });
            }
            out
        }
    };
    LabeledNote {
        note_id: labeled.note_id.clone(),
        sample_type,
        sentences,
    }
}

/// Labels raw notes and renders them per `kind`. Notes without an anchoring
/// heading are skipped with a warning. Output is ordered by note id.
pub fn build_corpus(notes: &[RawNote], kind: CorpusKind, seed: u64) -> Vec<LabeledNote> {
    build_corpus_with(&Normalizer::default(), notes, kind, seed)
}

pub fn build_corpus_with(normalizer: &Normalizer, notes: &[RawNote], kind: CorpusKind, seed: u64) -> Vec<LabeledNote> {
    let labeled = label_notes(normalizer, notes);
    compose(&labeled, kind, seed)
}

/// Rule-based labeling of every note, sorted by note id. Failures are logged
/// and skipped.
pub fn label_notes(normalizer: &Normalizer, notes: &[RawNote]) -> Vec<LabeledNote> {
    if notes.is_empty() {
        warn!("building a corpus from zero notes");
    }
    let results: Vec<Result<LabeledNote>> = notes.par_iter().map(|n| assign_labels_with(normalizer, n)).collect();
    let mut labeled = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(note) => labeled.push(note),
            Err(e) => warn!("skipping note: {e}"),
        }
    }
    labeled.sort_by(|a, b| a.note_id.cmp(&b.note_id));
    labeled
}

/// Renders already-labeled (Type2) notes per `kind`.
pub fn compose(labeled: &[LabeledNote], kind: CorpusKind, seed: u64) -> Vec<LabeledNote> {
    let types: Vec<SampleType> = match kind {
        CorpusKind::HeadingsOnly => vec![SampleType::Type2; labeled.len()],
        CorpusKind::NoHeadings => vec![SampleType::Type1; labeled.len()],
        CorpusKind::Mixed => {
            // Balanced: type counts differ by at most one.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut t: Vec<SampleType> = (0..labeled.len()).map(|i| SampleType::ALL[i % 4]).collect();
            t.shuffle(&mut rng);
            t
        }
    };
    labeled.iter().zip(types).map(|(note, t)| make_sample(note, t)).collect()
}

pub trait NoteId {
    fn note_id(&self) -> &str;
}

impl NoteId for RawNote {
    fn note_id(&self) -> &str {
        &self.note_id
    }
}

impl NoteId for LabeledNote {
    fn note_id(&self) -> &str {
        &self.note_id
    }
}

/// Splits by note id, so every record of a note lands on the same side.
pub fn split_train_test<T: NoteId + Clone>(items: &[T], train_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {train_fraction} not in (0, 1)")));
    }
    let ids: BTreeSet<&str> = items.iter().map(NoteId::note_id).collect();
    if ids.len() < 2 {
        return Err(Error::TooFewNotes(ids.len()));
    }
    let mut ids: Vec<&str> = ids.into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ids.len() as f64 * train_fraction).round() as usize).clamp(1, ids.len() - 1);
    let train_ids: BTreeSet<&str> = ids[..n_train].iter().copied().collect();
    let (train, test): (Vec<&T>, Vec<&T>) = items.iter().partition(|x| train_ids.contains(x.note_id()));
    Ok((train.into_iter().cloned().collect(), test.into_iter().cloned().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::rules::assign_labels;
    use crate::corpus::SectionLabel::*;

    fn fixture() -> LabeledNote {
        let text = "Admission Date:\n[**2118-6-7**]\nHPI\nshe felt unwell. then worse.\n\
                    History of Present Illness:\nchest pain for two days\nSocial History:\nlives alone\nno tobacco";
        assign_labels(&RawNote::new("f", text)).unwrap()
    }

    #[test]
    fn type1_drops_headings() {
        let note = fixture();
        let headings = note.sentences.iter().filter(|s| s.role == SentenceRole::Heading).count();
        assert_eq!(headings, 4);
        let t1 = make_sample(&note, SampleType::Type1);
        assert_eq!(t1.sentences.len(), note.sentences.len() - 4);
        assert_eq!(t1.sample_type, SampleType::Type1);
    }

    #[test]
    fn type2_is_identity() {
        let note = fixture();
        assert_eq!(make_sample(&note, SampleType::Type2), note);
    }

    #[test]
    fn type3_canonicalizes_headings() {
        let note = fixture();
        let t3 = make_sample(&note, SampleType::Type3);
        // "HPI" is unmatched, so its section keeps the admission date label
        assert_eq!(t3.sentences[2].tokens, ["admission", "date"]);
        assert_eq!(t3.sentences[5].tokens, ["history", "of", "present", "illness"]);
    }

    #[test]
    fn type3_replaces_an_hpi_heading_with_its_label() {
        let text = "History of Present Illness:\nshe had pain\nHPI\nit got worse";
        let note = assign_labels(&RawNote::new("h", text)).unwrap();
        let t3 = make_sample(&note, SampleType::Type3);
        assert_eq!(t3.sentences[2].tokens, ["history", "of", "present", "illness"]);
        assert_eq!(t3.sentences[2].label, HistoryOfPresentIllness);
    }

    #[test]
    fn type4_wraps_each_label_run() {
        let note = fixture();
        let t4 = make_sample(&note, SampleType::Type4);
        assert_eq!(t4.sentences.len(), note.sentences.len() + 6);
        assert_eq!(t4.sentences[0].tokens, ["<", "admission", "date", ">"]);
        let close = t4.sentences.iter().position(|s| s.tokens[0] == "</").unwrap();
        assert_eq!(t4.sentences[close].label, AdmissionDate);
        assert_eq!(t4.sentences[close + 1].tokens, ["<", "history", "of", "present", "illness", ">"]);
        assert_eq!(t4.sentences.last().unwrap().tokens, ["</", "social", "history", ">"]);
    }

    #[test]
    fn content_is_identical_across_types() {
        let note = fixture();
        let content = |n: &LabeledNote| -> Vec<(Vec<String>, _)> {
            n.sentences
                .iter()
                .filter(|s| s.role == SentenceRole::Content)
                .map(|s| (s.tokens.clone(), s.label))
                .collect()
        };
        let base = content(&note);
        for t in SampleType::ALL {
            assert_eq!(content(&make_sample(&note, t)), base);
        }
    }

    #[test]
    fn corpus_kinds() {
        let notes: Vec<RawNote> = (0..100)
            .map(|i| RawNote::new(format!("n{i:03}"), "Service:\nmedicine\nAllergies:\nnone"))
            .collect();
        let c = build_corpus(&notes, CorpusKind::HeadingsOnly, 1);
        assert_eq!(c.len(), 100);
        assert!(c.iter().all(|n| n.sample_type == SampleType::Type2));
        let c = build_corpus(&notes, CorpusKind::NoHeadings, 1);
        assert!(c.iter().all(|n| n.sample_type == SampleType::Type1 && n.sentences.len() == 2));
        assert!(build_corpus(&[], CorpusKind::Mixed, 1).is_empty());
    }

    #[test]
    fn mixed_is_evenly_split() {
        let notes: Vec<RawNote> = (0..2002)
            .map(|i| RawNote::new(format!("n{i:04}"), "Service:\nmedicine"))
            .collect();
        let c = build_corpus(&notes, CorpusKind::Mixed, 5);
        for t in SampleType::ALL {
            let k = c.iter().filter(|n| n.sample_type == t).count();
            assert!(k == 500 || k == 501, "{t:?}: {k}");
        }
        let again = build_corpus(&notes, CorpusKind::Mixed, 5);
        assert_eq!(c, again);
        assert_ne!(c, build_corpus(&notes, CorpusKind::Mixed, 6));
    }

    #[test]
    fn unanchored_notes_are_skipped() {
        let notes = vec![RawNote::new("a", "Service:\nx"), RawNote::new("b", "ZZZ\ny")];
        let c = build_corpus(&notes, CorpusKind::HeadingsOnly, 0);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].note_id, "a");
    }

    #[test]
    fn split_sizes_and_determinism() {
        let notes: Vec<RawNote> = (0..50_000).map(|i| RawNote::new(format!("{i}"), "")).collect();
        let (train, test) = split_train_test(&notes, 0.8, 3).unwrap();
        assert_eq!((train.len(), test.len()), (40_000, 10_000));

        let small = &notes[..10];
        let a = split_train_test(small, 0.5, 9).unwrap();
        let b = split_train_test(small, 0.5, 9).unwrap();
        assert_eq!(a, b);
        let train_ids: BTreeSet<_> = a.0.iter().map(|n| n.note_id.clone()).collect();
        assert!(a.1.iter().all(|n| !train_ids.contains(&n.note_id)));

        assert!(matches!(split_train_test(&notes[..1], 0.5, 0), Err(Error::TooFewNotes(1))));
        assert!(split_train_test(small, 1.0, 0).is_err());
    }
}
