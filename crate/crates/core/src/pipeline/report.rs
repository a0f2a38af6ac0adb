use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::Segmenter;
use crate::corpus::{LabeledNote, SampleType, SectionLabel, NUM_LABELS};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeScore {
    pub notes: usize,
    pub sentences: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelScore {
    pub label: SectionLabel,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Sentence-level results of a model on a labeled corpus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub notes: usize,
    pub sentences: usize,
    pub accuracy: f64,
    /// Keyed by sample type name; only types present in the corpus.
    pub per_type: BTreeMap<String, TypeScore>,
    pub per_label: Vec<LabelScore>,
    /// Rows are gold labels, columns predictions, both in label order.
    pub confusion: Vec<Vec<u64>>,
    /// Provenance hashes, filled in by the caller.
    pub hashes: BTreeMap<String, String>,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn evaluate(seg: &Segmenter, notes: &[LabeledNote]) -> Result<EvalReport> {
    let preds: Vec<Vec<SectionLabel>> = notes.par_iter().map(|n| seg.predict_note(n)).collect::<Result<_>>()?;
    let mut confusion = vec![vec![0u64; NUM_LABELS]; NUM_LABELS];
    let mut per_type: BTreeMap<SampleType, TypeScore> = BTreeMap::new();
    for (note, pred) in notes.iter().zip(&preds) {
        let score = per_type.entry(note.sample_type).or_insert(TypeScore {
            notes: 0,
            sentences: 0,
            correct: 0,
            accuracy: 0.0,
        });
        score.notes += 1;
        for (s, p) in note.sentences.iter().zip(pred) {
            confusion[s.label.index()][p.index()] += 1;
            score.sentences += 1;
            score.correct += usize::from(s.label == *p);
        }
    }
    for s in per_type.values_mut() {
        s.accuracy = ratio(s.correct as u64, s.sentences as u64);
    }
    let per_label = SectionLabel::ALL
        .iter()
        .map(|&l| {
            let i = l.index();
            let tp = confusion[i][i];
            let support: u64 = confusion[i].iter().sum();
            let predicted: u64 = confusion.iter().map(|row| row[i]).sum();
            let (precision, recall) = (ratio(tp, predicted), ratio(tp, support));
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            LabelScore {
                label: l,
                support,
                precision,
                recall,
                f1,
            }
        })
        .collect();
    let sentences: usize = per_type.values().map(|s| s.sentences).sum();
    let correct: usize = per_type.values().map(|s| s.correct).sum();
    Ok(EvalReport {
        notes: notes.len(),
        sentences,
        accuracy: ratio(correct as u64, sentences as u64),
        per_type: per_type.into_iter().map(|(t, s)| (t.name().to_string(), s)).collect(),
        per_label,
        confusion,
        hashes: BTreeMap::new(),
    })
}

impl EvalReport {
    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "notes {}  sentences {}  accuracy {:.4}", self.notes, self.sentences, self.accuracy);
        let _ = writeln!(s, "\n{:<8} {:>6} {:>9} {:>9}", "type", "notes", "sentences", "accuracy");
        for (t, sc) in &self.per_type {
            let _ = writeln!(s, "{t:<8} {:>6} {:>9} {:>9.4}", sc.notes, sc.sentences, sc.accuracy);
        }
        let _ = writeln!(s, "\n{:<38} {:>7} {:>9} {:>7} {:>7}", "label", "support", "precision", "recall", "f1");
        for l in &self.per_label {
            let _ = writeln!(
                s,
                "{:<38} {:>7} {:>9.4} {:>7.4} {:>7.4}",
                l.label.as_str(),
                l.support,
                l.precision,
                l.recall,
                l.f1
            );
        }
        if !self.hashes.is_empty() {
            s.push('\n');
            for (k, v) in &self.hashes {
                let _ = writeln!(s, "{k:<8} {v}");
            }
        }
        s
    }
}
