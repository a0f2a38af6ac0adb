//! End-to-end segmentation: the trained model bundle, evaluation and the
//! synthetic reproduction run.

mod config;
mod report;
mod reproduce;

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::PipelineConfig;
pub use report::{evaluate, EvalReport, LabelScore, TypeScore};
pub use reproduce::{reproduce, MatrixRow, ReproduceReport};

use crate::container::{decode_meta, encode_meta, Container};
use crate::corpus::{LabeledNote, SectionLabel};
use crate::embeddings::{hex, put_embeddings, take_embeddings, EmbeddingMatrix, Vocabulary};
use crate::error::{Error, PathContext, Result};
use crate::normalize::{Normalizer, RawNote};
use crate::sif::{encode_note, EncoderMode, SifConfig};
use crate::tagger::{train_tagger, TaggedSequence, TaggerModel, TrainConfig, TrainOutcome};

const FORMAT: &str = "emrseg-segmenter";

/// Everything needed to segment a note: vocabulary, word vectors, encoder
/// settings and the tagger.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmenter {
    pub vocab: Vocabulary,
    pub embeddings: EmbeddingMatrix,
    pub mode: EncoderMode,
    pub sif: SifConfig,
    pub max_sentence_tokens: usize,
    pub tagger: TaggerModel,
}

/// One sentence of a segmented note.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentRecord {
    pub note_id: String,
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub label: SectionLabel,
    pub text: String,
}

pub fn label_names() -> Vec<String> {
    SectionLabel::ALL.iter().map(|l| l.as_str().to_string()).collect()
}

/// Sentence vectors and gold label ids of each note.
pub fn encode_corpus(
    notes: &[LabeledNote],
    vocab: &Vocabulary,
    emb: &EmbeddingMatrix,
    mode: EncoderMode,
    sif: &SifConfig,
) -> Vec<TaggedSequence> {
    notes
        .par_iter()
        .map(|n| {
            let sents: Vec<&[String]> = n.sentences.iter().map(|s| s.tokens.as_slice()).collect();
            TaggedSequence {
                vectors: encode_note(&sents, vocab, emb, mode, sif).vectors,
                labels: n.sentences.iter().map(|s| s.label.index()).collect(),
            }
        })
        .collect()
}

/// Trains a tagger on `notes` over fixed embeddings.
pub fn train_segmenter(
    notes: &[LabeledNote],
    vocab: &Vocabulary,
    emb: &EmbeddingMatrix,
    mode: EncoderMode,
    sif: &SifConfig,
    train: &TrainConfig,
) -> Result<(Segmenter, TrainOutcome)> {
    emb.check_vocabulary(vocab)?;
    let data = encode_corpus(notes, vocab, emb, mode, sif);
    let outcome = train_tagger(&data, label_names(), train)?;
    let seg = Segmenter {
        vocab: vocab.clone(),
        embeddings: emb.clone(),
        mode,
        sif: sif.clone(),
        max_sentence_tokens: crate::normalize::DEFAULT_MAX_SENTENCE_TOKENS,
        tagger: outcome.model.clone(),
    };
    Ok((seg, outcome))
}

impl Segmenter {
    pub fn encode<S: AsRef<[String]>>(&self, sentences: &[S]) -> Array2<f64> {
        encode_note(sentences, &self.vocab, &self.embeddings, self.mode, &self.sif).vectors
    }

    pub fn predict<S: AsRef<[String]>>(&self, sentences: &[S]) -> Result<Vec<SectionLabel>> {
        let ids = self.tagger.predict(self.encode(sentences).view())?;
        Ok(ids
            .into_iter()
            .map(|i| SectionLabel::from_index(i).expect("tagger labels are the section labels"))
            .collect())
    }

    pub fn predict_note(&self, note: &LabeledNote) -> Result<Vec<SectionLabel>> {
        let sents: Vec<&[String]> = note.sentences.iter().map(|s| s.tokens.as_slice()).collect();
        self.predict(&sents)
    }

    /// Splits, normalizes and labels a raw note.
    pub fn segment(&self, normalizer: &Normalizer, note: &RawNote) -> Result<Vec<SegmentRecord>> {
        let sentences = normalizer.split_sentences(note)?;
        let tokens: Vec<&[String]> = sentences.iter().map(|s| s.tokens.as_slice()).collect();
        let labels = self.predict(&tokens)?;
        Ok(sentences
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (s, label))| SegmentRecord {
                note_id: note.note_id.clone(),
                index: i,
                start: s.span.0,
                end: s.span.1,
                label,
                text: note.text[s.span.0..s.span.1].to_string(),
            })
            .collect())
    }

    pub fn normalizer(&self) -> Normalizer {
        Normalizer::default().with_max_sentence_tokens(self.max_sentence_tokens)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        c.insert_text(
            "meta",
            encode_meta(&[
                ("format", FORMAT.to_string()),
                ("encoder", self.mode.name().to_string()),
                ("sif.alpha", self.sif.alpha.to_string()),
                ("sif.power_steps", self.sif.power_steps.to_string()),
                ("sif.power_tolerance", self.sif.power_tolerance.to_string()),
                ("sif.seed", self.sif.seed.to_string()),
                ("max_sentence_tokens", self.max_sentence_tokens.to_string()),
            ]),
        );
        put_embeddings(&mut c, &self.vocab, &self.embeddings);
        self.tagger.write_to(&mut c, "tagger.");
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let meta = decode_meta(c.text("meta")?);
        let field = |k: &str| -> Result<&str> {
            meta.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::MissingTensor(format!("meta.{k}")))
        };
        if field("format")? != FORMAT {
            return Err(Error::UnknownHeader);
        }
        let parse = |k: &str| -> Result<f64> {
            field(k)?
                .parse()
                .map_err(|_| Error::Config(format!("bad meta value for {k}")))
        };
        let sif = SifConfig {
            alpha: parse("sif.alpha")?,
            power_steps: parse("sif.power_steps")? as usize,
            power_tolerance: parse("sif.power_tolerance")?,
            seed: field("sif.seed")?
                .parse()
                .map_err(|_| Error::Config("bad meta value for sif.seed".into()))?,
        };
        let (vocab, embeddings) = take_embeddings(c)?;
        let tagger = TaggerModel::read_from(c, "tagger.")?;
        if tagger.labels != label_names() {
            let bad = tagger
                .labels
                .iter()
                .find(|l| l.parse::<SectionLabel>().is_err())
                .cloned()
                .unwrap_or_else(|| tagger.labels.join(","));
            return Err(Error::UnknownLabel(bad));
        }
        if tagger.input_dim() != embeddings.dim() {
            return Err(Error::DimensionMismatch {
                expected: embeddings.dim(),
                found: tagger.input_dim(),
            });
        }
        Ok(Segmenter {
            vocab,
            embeddings,
            mode: EncoderMode::parse(field("encoder")?)?,
            sif,
            max_sentence_tokens: parse("max_sentence_tokens")? as usize,
            tagger,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_hash(path: &Path) -> Result<String> {
    Ok(hex(&Sha256::digest(std::fs::read(path).with_path(path)?)))
}

pub fn bytes_hash(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}
