//! The full synthetic experiment: one embedding model, taggers trained on
//! each corpus kind, all tested on every sample type.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use log::info;
use serde::Serialize;

use super::{bytes_hash, evaluate, train_segmenter, PipelineConfig};
use crate::corpus::{
    compose, generate_notes, label_notes, make_sample, split_train_test, to_jsonl, CorpusKind, LabeledNote,
    SampleType, SectionGrammar,
};
use crate::embeddings::train_on_corpus;
use crate::error::Result;
use crate::normalize::Normalizer;
use crate::sif::EncoderMode;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixRow {
    pub corpus: CorpusKind,
    pub encoder: EncoderMode,
    /// Sentence accuracy per test sample type.
    pub accuracy: BTreeMap<SampleType, f64>,
    /// Pooled over the four test sets.
    pub overall: f64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub model_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproduceReport {
    pub config_hash: String,
    pub corpus_hash: String,
    pub seed: u64,
    pub generated_notes: usize,
    pub train_notes: usize,
    pub test_notes: usize,
    pub vocabulary: usize,
    pub embedding_losses: Vec<f64>,
    /// One SIF model per training corpus kind.
    pub rows: Vec<MatrixRow>,
    /// Plain-average encoder on the mixed corpus, for comparison.
    pub ave_baseline: MatrixRow,
}

impl ReproduceReport {
    pub fn row(&self, corpus: CorpusKind, encoder: EncoderMode) -> Option<&MatrixRow> {
        self.rows
            .iter()
            .chain(std::iter::once(&self.ave_baseline))
            .find(|r| r.corpus == corpus && r.encoder == encoder)
    }

    pub fn accuracy(&self, corpus: CorpusKind, encoder: EncoderMode, t: SampleType) -> Option<f64> {
        self.row(corpus, encoder).and_then(|r| r.accuracy.get(&t).copied())
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<14} {:<4}", "train corpus", "enc");
        for t in SampleType::ALL {
            let _ = write!(s, " {:>7}", t.name());
        }
        s.push_str("  overall\n");
        for (i, r) in self.rows.iter().chain(std::iter::once(&self.ave_baseline)).enumerate() {
            if i == self.rows.len() {
                s.push('\n');
            }
            let _ = write!(s, "{:<14} {:<4}", r.corpus.name(), r.encoder.name());
            for t in SampleType::ALL {
                let _ = write!(s, " {:>7.4}", r.accuracy.get(&t).copied().unwrap_or(f64::NAN));
            }
            let _ = writeln!(s, "  {:>7.4}", r.overall);
        }
        let _ = writeln!(
            s,
            "\n{} train / {} test notes, vocabulary {}",
            self.train_notes, self.test_notes, self.vocabulary
        );
        s
    }
}

fn test_sets(test: &[LabeledNote]) -> Vec<(SampleType, Vec<LabeledNote>)> {
    SampleType::ALL
        .into_iter()
        .map(|t| (t, test.iter().map(|n| make_sample(n, t)).collect()))
        .collect()
}

/// Runs the experiment described by `cfg`: three SIF taggers (one per corpus
/// kind) and one plain-average tagger on the mixed corpus. All four share one
/// set of word vectors trained on the mixed training corpus.
pub fn reproduce(cfg: &PipelineConfig) -> Result<ReproduceReport> {
    cfg.validate()?;
    let started = Instant::now();
    let grammar = match &cfg.grammar {
        Some(p) => SectionGrammar::from_file(p)?,
        None => SectionGrammar::default(),
    };
    let normalizer = Normalizer::default().with_max_sentence_tokens(cfg.max_sentence_tokens);
    let raw = generate_notes(&grammar, cfg.notes, cfg.stage_seed("synth"));
    let labeled = label_notes(&normalizer, &raw);
    let (train, test) = split_train_test(&labeled, cfg.train_fraction, cfg.stage_seed("split"))?;
    info!("{} notes labeled: {} train, {} test", labeled.len(), train.len(), test.len());

    let corpus_seed = cfg.stage_seed("compose");
    let mixed = compose(&train, CorpusKind::Mixed, corpus_seed);
    let (vocab, emb, losses) = train_on_corpus(&mixed, &cfg.skipgram_config())?;
    info!("embeddings: vocabulary {}, losses {losses:?}", vocab.len());

    let tests = test_sets(&test);
    let runs = [
        (CorpusKind::HeadingsOnly, EncoderMode::Sif),
        (CorpusKind::NoHeadings, EncoderMode::Sif),
        (CorpusKind::Mixed, EncoderMode::Sif),
        (CorpusKind::Mixed, EncoderMode::Ave),
    ];
    let mut rows = Vec::new();
    for (kind, mode) in runs {
        let t0 = Instant::now();
        let corpus = compose(&train, kind, corpus_seed);
        info!("training {} / {}", kind.name(), mode.name());
        let (seg, outcome) = train_segmenter(&corpus, &vocab, &emb, mode, &cfg.sif, &cfg.tagger_config())?;
        let mut accuracy = BTreeMap::new();
        let (mut correct, mut total) = (0.0, 0.0);
        for (t, notes) in &tests {
            let r = evaluate(&seg, notes)?;
            accuracy.insert(*t, r.accuracy);
            correct += r.accuracy * r.sentences as f64;
            total += r.sentences as f64;
        }
        info!(
            "{} / {}: {accuracy:?} ({:.0}s)",
            kind.name(),
            mode.name(),
            t0.elapsed().as_secs_f64()
        );
        rows.push(MatrixRow {
            corpus: kind,
            encoder: mode,
            accuracy,
            overall: correct / total,
            epochs: outcome.history.len(),
            best_epoch: outcome.best_epoch,
            model_hash: bytes_hash(&seg.to_container().to_bytes()),
        });
    }
    info!("reproduction finished in {:.0}s", started.elapsed().as_secs_f64());
    let ave_baseline = rows.pop().expect("four runs");
    Ok(ReproduceReport {
        config_hash: cfg.hash(),
        corpus_hash: bytes_hash(to_jsonl(&labeled).as_bytes()),
        seed: cfg.seed,
        generated_notes: raw.len(),
        train_notes: train.len(),
        test_notes: test.len(),
        vocabulary: vocab.len(),
        embedding_losses: losses,
        rows,
        ave_baseline,
    })
}
