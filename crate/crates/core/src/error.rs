use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input is not valid UTF-8: {0}")]
    Encoding(#[from] std::str::Utf8Error),

    #[error("note {note_id:?} produced no sentences")]
    EmptyNote { note_id: String },

    #[error("note {note_id:?} has no heading that matches a section label")]
    NoAnchorSection { note_id: String },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("corpus has {tokens} tokens, fewer than one window of {window}")]
    CorpusTooSmall { tokens: usize, window: usize },

    #[error("need at least 2 notes to split, got {0}")]
    TooFewNotes(usize),

    #[error("invalid grammar: {0}")]
    Grammar(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch for {name}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("unknown file header")]
    UnknownHeader,

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("vocabulary hash does not match the stored embeddings")]
    VocabularyHashMismatch,

    #[error("missing tensor {0:?} in container")]
    MissingTensor(String),

    #[error("label index {label} out of range for {num_labels} labels")]
    LabelOutOfRange { label: usize, num_labels: usize },

    #[error("unknown section label {0:?}")]
    UnknownLabel(String),

    #[error("empty sequence")]
    EmptySequence,

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("{path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait PathContext<T> {
    fn with_path(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> PathContext<T> for std::result::Result<T, std::io::Error> {
    fn with_path(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Path {
            path: path.into(),
            source,
        })
    }
}
