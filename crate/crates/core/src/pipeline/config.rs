//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::corpus::CorpusKind;
use crate::embeddings::{hex, SkipGramConfig};
use crate::error::{Error, PathContext, Result};
use crate::sif::{EncoderMode, SifConfig};
use crate::tagger::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub encoder: EncoderMode,
    /// Corpus a tagger is trained on.
    pub corpus: CorpusKind,
    /// Synthetic notes generated by `reproduce`.
    pub notes: usize,
    pub train_fraction: f64,
    pub max_sentence_tokens: usize,
    pub grammar: Option<PathBuf>,
    pub skipgram: SkipGramConfig,
    pub sif: SifConfig,
    pub tagger: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            encoder: EncoderMode::Sif,
            corpus: CorpusKind::Mixed,
            notes: 1000,
            train_fraction: 0.8,
            max_sentence_tokens: crate::normalize::DEFAULT_MAX_SENTENCE_TOKENS,
            grammar: None,
            skipgram: SkipGramConfig::default(),
            sif: SifConfig::default(),
            tagger: TrainConfig::default(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

impl PipelineConfig {
    pub const KEYS: [&'static str; 22] = [
        "seed",
        "encoder",
        "corpus",
        "notes",
        "train_fraction",
        "max_sentence_tokens",
        "grammar",
        "w2v.dim",
        "w2v.window",
        "w2v.negatives",
        "w2v.epochs",
        "w2v.learning_rate",
        "sif.alpha",
        "sif.power_steps",
        "sif.power_tolerance",
        "tagger.hidden",
        "tagger.learning_rate",
        "tagger.batch_size",
        "tagger.max_epochs",
        "tagger.patience",
        "tagger.clip_norm",
        "tagger.dev_fraction",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "seed" => self.seed = num(key, value)?,
            "encoder" => self.encoder = EncoderMode::parse(value)?,
            "corpus" => self.corpus = CorpusKind::parse(value)?,
            "notes" => self.notes = num(key, value)?,
            "train_fraction" => self.train_fraction = num(key, value)?,
            "max_sentence_tokens" => self.max_sentence_tokens = num(key, value)?,
            "grammar" => self.grammar = (!value.is_empty()).then(|| PathBuf::from(value)),
            "w2v.dim" => self.skipgram.dim = num(key, value)?,
            "w2v.window" => self.skipgram.window = num(key, value)?,
            "w2v.negatives" => self.skipgram.negatives = num(key, value)?,
            "w2v.epochs" => self.skipgram.epochs = num(key, value)?,
            "w2v.learning_rate" => self.skipgram.learning_rate = num(key, value)?,
            "sif.alpha" => self.sif.alpha = num(key, value)?,
            "sif.power_steps" => self.sif.power_steps = num(key, value)?,
            "sif.power_tolerance" => self.sif.power_tolerance = num(key, value)?,
            "tagger.hidden" => self.tagger.hidden = num(key, value)?,
            "tagger.learning_rate" => self.tagger.learning_rate = num(key, value)?,
            "tagger.batch_size" => self.tagger.batch_size = num(key, value)?,
            "tagger.max_epochs" => self.tagger.max_epochs = num(key, value)?,
            "tagger.patience" => self.tagger.patience = num(key, value)?,
            "tagger.clip_norm" => self.tagger.clip_norm = num(key, value)?,
            "tagger.dev_fraction" => self.tagger.dev_fraction = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "seed" => self.seed.to_string(),
            "encoder" => self.encoder.name().to_string(),
            "corpus" => self.corpus.name().to_string(),
            "notes" => self.notes.to_string(),
            "train_fraction" => self.train_fraction.to_string(),
            "max_sentence_tokens" => self.max_sentence_tokens.to_string(),
            "grammar" => self.grammar.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "w2v.dim" => self.skipgram.dim.to_string(),
            "w2v.window" => self.skipgram.window.to_string(),
            "w2v.negatives" => self.skipgram.negatives.to_string(),
            "w2v.epochs" => self.skipgram.epochs.to_string(),
            "w2v.learning_rate" => self.skipgram.learning_rate.to_string(),
            "sif.alpha" => self.sif.alpha.to_string(),
            "sif.power_steps" => self.sif.power_steps.to_string(),
            "sif.power_tolerance" => self.sif.power_tolerance.to_string(),
            "tagger.hidden" => self.tagger.hidden.to_string(),
            "tagger.learning_rate" => self.tagger.learning_rate.to_string(),
            "tagger.batch_size" => self.tagger.batch_size.to_string(),
            "tagger.max_epochs" => self.tagger.max_epochs.to_string(),
            "tagger.patience" => self.tagger.patience.to_string(),
            "tagger.clip_norm" => self.tagger.clip_norm.to_string(),
            "tagger.dev_fraction" => self.tagger.dev_fraction.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            self.set(k.trim(), v)?;
        }
        self.validate()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_str(&std::fs::read_to_string(path).with_path(path)?)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction {} not in (0, 1)", self.train_fraction)));
        }
        if self.max_sentence_tokens == 0 {
            return Err(Error::Config("max_sentence_tokens must be positive".into()));
        }
        if !(self.sif.alpha > 0.0) {
            return Err(Error::Config("sif.alpha must be positive".into()));
        }
        self.skipgram.validate()?;
        self.tagger.validate()
    }

    /// Canonical text form: every key in a fixed order.
    pub fn to_kv_string(&self) -> String {
        Self::KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_kv_string().as_bytes()))
    }

    /// Independent seed for one stage of the run.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        let digest = Sha256::digest(format!("{}:{stage}", self.seed).as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    pub fn skipgram_config(&self) -> SkipGramConfig {
        SkipGramConfig {
            seed: self.stage_seed("w2v"),
            ..self.skipgram.clone()
        }
    }

    pub fn tagger_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.stage_seed("tagger"),
            ..self.tagger.clone()
        }
    }
}
