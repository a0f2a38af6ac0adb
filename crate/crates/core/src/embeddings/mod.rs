//! Word vocabulary, skip-gram embeddings and their file formats.

mod skipgram;
mod vocab;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};

pub use skipgram::{sgns_loss, train_skipgram, SkipGramConfig};
pub(crate) use vocab::hex;
pub use vocab::Vocabulary;

use crate::container::Container;
use crate::corpus::LabeledNote;
use crate::error::{Error, PathContext, Result};

/// One vector per vocabulary id, tied to the vocabulary by its hash.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    vectors: Array2<f64>,
    vocab_hash: String,
}

impl EmbeddingMatrix {
    pub fn new(vectors: Array2<f64>, vocab_hash: String) -> Self {
        EmbeddingMatrix { vectors, vocab_hash }
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn vector(&self, id: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(id)
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn vocab_hash(&self) -> &str {
        &self.vocab_hash
    }

    pub fn check_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        if self.vocab_hash != vocab.hash() || self.len() != vocab.len() {
            return Err(Error::VocabularyHashMismatch);
        }
        Ok(())
    }
}

/// Vocabulary and skip-gram vectors trained on every sentence of `notes`.
pub fn train_on_corpus(notes: &[LabeledNote], cfg: &SkipGramConfig) -> Result<(Vocabulary, EmbeddingMatrix, Vec<f64>)> {
    let vocab = Vocabulary::from_corpus(notes)?;
    let sentences: Vec<Vec<usize>> = notes
        .iter()
        .flat_map(|n| &n.sentences)
        .map(|s| vocab.encode(&s.tokens))
        .collect();
    let (emb, losses) = train_skipgram(&sentences, &vocab, cfg)?;
    Ok((vocab, emb, losses))
}

pub(crate) fn put_embeddings(c: &mut Container, vocab: &Vocabulary, emb: &EmbeddingMatrix) {
    c.insert_text("vocab.tokens", vocab.tokens().join("\n"));
    c.insert_u64("vocab.counts", vocab.counts().to_vec());
    c.insert_text("embeddings.vocab_hash", emb.vocab_hash());
    c.insert_f64(
        "embeddings.vectors",
        &[emb.len(), emb.dim()],
        emb.vectors().iter().copied().collect(),
    );
}

pub(crate) fn take_embeddings(c: &Container) -> Result<(Vocabulary, EmbeddingMatrix)> {
    let tokens = c.text("vocab.tokens")?;
    let counts = c.u64("vocab.counts")?;
    let tokens: Vec<&str> = tokens.split('\n').collect();
    if tokens.len() != counts.len() {
        return Err(Error::DimensionMismatch {
            expected: counts.len(),
            found: tokens.len(),
        });
    }
    let vocab = Vocabulary::from_counts(tokens.iter().map(|t| t.to_string()).zip(counts.iter().copied()))?;
    if vocab.tokens().iter().zip(&tokens).any(|(a, b)| a != b) {
        return Err(Error::VocabularyHashMismatch);
    }
    let (shape, data) = c.f64_any("embeddings.vectors")?;
    if shape.len() != 2 || shape[0] != vocab.len() {
        return Err(Error::ShapeMismatch {
            name: "embeddings.vectors".into(),
            expected: vec![vocab.len(), shape.get(1).copied().unwrap_or(0)],
            found: shape.to_vec(),
        });
    }
    let vectors = Array2::from_shape_vec((shape[0], shape[1]), data.to_vec()).expect("checked shape");
    let emb = EmbeddingMatrix::new(vectors, c.text("embeddings.vocab_hash")?.to_string());
    emb.check_vocabulary(&vocab)?;
    Ok((vocab, emb))
}

pub fn save_embeddings(path: &Path, vocab: &Vocabulary, emb: &EmbeddingMatrix) -> Result<()> {
    let mut c = Container::new();
    put_embeddings(&mut c, vocab, emb);
    c.save(path)
}

/// Path of the `token\tcount` file that accompanies a text-format file.
pub fn counts_sidecar(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".counts");
    PathBuf::from(p)
}

/// Writes word2vec text format plus the counts sidecar.
pub fn save_word2vec_text(path: &Path, vocab: &Vocabulary, emb: &EmbeddingMatrix) -> Result<()> {
    let mut s = format!("{} {}\n", emb.len(), emb.dim());
    for (id, row) in emb.vectors().rows().into_iter().enumerate() {
        s.push_str(vocab.token(id));
        for x in row {
            let _ = write!(s, " {x}");
        }
        s.push('\n');
    }
    std::fs::write(path, s).with_path(path)?;
    vocab.write_counts(&counts_sidecar(path))
}

/// Reads word2vec text format. Counts come from `counts`, which must cover
/// exactly the same tokens.
pub fn load_word2vec_text(path: &Path, counts: &Path) -> Result<(Vocabulary, EmbeddingMatrix)> {
    let text = std::fs::read_to_string(path).with_path(path)?;
    let vocab = Vocabulary::read_counts(counts)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::UnknownHeader)?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::UnknownHeader)?;
    let [rows, dim] = dims[..] else {
        return Err(Error::UnknownHeader);
    };

    let mut vectors: HashMap<&str, Vec<f64>> = HashMap::with_capacity(rows);
    let mut n = 0;
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        n += 1;
        let mut fields = line.split(' ');
        let tok = fields.next().unwrap_or_default();
        let vals: Vec<f64> = fields
            .filter(|f| !f.is_empty())
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: i + 2,
                message: format!("bad number in row for {tok:?}"),
            })?;
        if vals.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: vals.len(),
            });
        }
        vectors.insert(tok, vals);
    }
    if n != rows {
        return Err(Error::Parse {
            line: n + 1,
            message: format!("header announces {rows} rows, found {n}"),
        });
    }
    if vectors.len() != vocab.len() {
        return Err(Error::VocabularyHashMismatch);
    }
    let mut data = Vec::with_capacity(rows * dim);
    for tok in vocab.tokens() {
        data.extend_from_slice(vectors.get(tok.as_str()).ok_or(Error::VocabularyHashMismatch)?);
    }
    let vectors = Array2::from_shape_vec((rows, dim), data).expect("rows*dim values");
    Ok((vocab.clone(), EmbeddingMatrix::new(vectors, vocab.hash())))
}

/// Loads either format: the binary container, or word2vec text with its
/// counts sidecar.
pub fn load_embeddings(path: &Path) -> Result<(Vocabulary, EmbeddingMatrix)> {
    let bytes = std::fs::read(path).with_path(path)?;
    if Container::sniff(&bytes) {
        take_embeddings(&Container::from_bytes(&bytes)?)
    } else {
        load_word2vec_text(path, &counts_sidecar(path))
    }
}
