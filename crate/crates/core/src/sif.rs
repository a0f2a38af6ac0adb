//! Sentence vectors: frequency-weighted averages of word vectors with the
//! note's dominant direction removed.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::{EmbeddingMatrix, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    /// Weighted average, then common-component removal.
    Sif,
    /// Plain average of word vectors.
    Ave,
}

impl EncoderMode {
    pub fn name(self) -> &'static str {
        match self {
            EncoderMode::Sif => "sif",
            EncoderMode::Ave => "ave",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sif" => Ok(EncoderMode::Sif),
            "ave" => Ok(EncoderMode::Ave),
            _ => Err(Error::Config(format!("unknown encoder {s:?} (sif or ave)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SifConfig {
    pub alpha: f64,
    pub power_steps: usize,
    /// Stop once successive unit iterates differ by at most this much.
    pub power_tolerance: f64,
    pub seed: u64,
}

impl Default for SifConfig {
    fn default() -> Self {
        SifConfig {
            alpha: 1e-3,
            power_steps: 100,
            power_tolerance: 1e-10,
            seed: 0x5EED,
        }
    }
}

/// α / (α + p)
pub fn sif_weight(p: f64, alpha: f64) -> f64 {
    alpha / (alpha + p)
}

/// Mean of `weights[i] * vectors[i]`; the zero vector for an empty input.
pub fn weighted_average<'a>(dim: usize, terms: impl IntoIterator<Item = (f64, ndarray::ArrayView1<'a, f64>)>) -> Array1<f64> {
    let mut acc = Array1::zeros(dim);
    let mut n = 0usize;
    for (w, v) in terms {
        acc.scaled_add(w, &v);
        n += 1;
    }
    if n > 0 {
        acc /= n as f64;
    }
    acc
}

/// Weighted sentence vector over in-vocabulary tokens. The flag is true
/// when no token was in the vocabulary and the vector is zero.
pub fn weighted_sentence_vector(
    tokens: &[String],
    vocab: &Vocabulary,
    emb: &EmbeddingMatrix,
    mode: EncoderMode,
    alpha: f64,
) -> (Array1<f64>, bool) {
    let ids = vocab.encode(tokens);
    let terms = ids.iter().map(|&id| {
        let w = match mode {
            EncoderMode::Sif => sif_weight(vocab.prob(id), alpha),
            EncoderMode::Ave => 1.0,
        };
        (w, emb.vector(id))
    });
    (weighted_average(emb.dim(), terms), ids.is_empty())
}

/// Unit first right singular vector of `rows` (one vector per row), by
/// power iteration on `rowsᵀ rows` without forming it. None for a zero
/// matrix.
pub fn dominant_direction(rows: ArrayView2<'_, f64>, cfg: &SifConfig) -> Option<Array1<f64>> {
    let d = rows.ncols();
    if rows.nrows() == 0 || d == 0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start: Array1<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut w = rows.t().dot(&rows.dot(&start));
    let norm = w.dot(&w).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    w /= norm;
    for _ in 0..cfg.power_steps {
        let mut next = rows.t().dot(&rows.dot(&w));
        let n = next.dot(&next).sqrt();
        if n == 0.0 {
            return None;
        }
        next /= n;
        let delta = (&next - &w).dot(&(&next - &w)).sqrt();
        w = next;
        if delta <= cfg.power_tolerance {
            break;
        }
    }
    Some(w)
}

/// Projects the dominant direction out of every row in place and returns
/// it. A zero matrix is left unchanged.
pub fn remove_common_component(rows: &mut Array2<f64>, cfg: &SifConfig) -> Option<Array1<f64>> {
    let u = dominant_direction(rows.view(), cfg)?;
    if rows.nrows() == 1 {
        // the row is its own direction; skip the rounding residue
        rows.fill(0.0);
        return Some(u);
    }
    for mut row in rows.axis_iter_mut(Axis(0)) {
        let c = row.dot(&u);
        row.scaled_add(-c, &u);
    }
    Some(u)
}

/// Sentence vectors of a note plus, per sentence, whether it had no
/// in-vocabulary token.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedNote {
    pub vectors: Array2<f64>,
    pub oov_only: Vec<bool>,
}

pub fn encode_note<S: AsRef<[String]>>(
    sentences: &[S],
    vocab: &Vocabulary,
    emb: &EmbeddingMatrix,
    mode: EncoderMode,
    cfg: &SifConfig,
) -> EncodedNote {
    let mut vectors = Array2::zeros((sentences.len(), emb.dim()));
    let mut oov_only = Vec::with_capacity(sentences.len());
    for (mut row, s) in vectors.axis_iter_mut(Axis(0)).zip(sentences) {
        let (v, empty) = weighted_sentence_vector(s.as_ref(), vocab, emb, mode, cfg.alpha);
        row.assign(&v);
        oov_only.push(empty);
    }
    if mode == EncoderMode::Sif {
        remove_common_component(&mut vectors, cfg);
    }
    EncodedNote { vectors, oov_only }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn weights() {
        assert_eq!(sif_weight(0.0, 1e-3), 1.0);
        assert_abs_diff_eq!(sif_weight(1e-3, 1e-3), 0.5);
        assert!(sif_weight(0.5, 1e-3) < sif_weight(0.01, 1e-3));
    }

    #[test]
    fn average_of_weighted_terms() {
        let e1 = array![2.0, 4.0];
        let e2 = array![1.0, -1.0];
        let s = weighted_average(2, [(0.5, e1.view()), (1.0, e2.view())]);
        assert_eq!(s, array![1.0, 0.5]);
        assert_eq!(weighted_average(2, []), array![0.0, 0.0]);
    }

    #[test]
    fn parallel_rows_vanish() {
        let mut m = array![[2.0, 0.0], [1.0, 0.0]];
        remove_common_component(&mut m, &SifConfig::default()).unwrap();
        assert_abs_diff_eq!(m, Array2::zeros((2, 2)), epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_rows_keep_the_minor_one() {
        let mut m = array![[2.0, 0.0], [0.0, 1.0]];
        let u = remove_common_component(&mut m, &SifConfig::default()).unwrap();
        assert_abs_diff_eq!(u[0].abs(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m, array![[0.0, 0.0], [0.0, 1.0]], epsilon = 1e-9);
    }

    #[test]
    fn zero_input_is_left_alone() {
        let mut m = Array2::<f64>::zeros((3, 4));
        assert!(remove_common_component(&mut m, &SifConfig::default()).is_none());
        assert_eq!(m, Array2::<f64>::zeros((3, 4)));
    }

    #[test]
    fn oov_sentences_are_flagged() {
        let vocab = Vocabulary::from_counts([("a".into(), 1), ("b".into(), 3)]).unwrap();
        let emb = EmbeddingMatrix::new(array![[1.0, 0.0], [0.0, 1.0]], vocab.hash());
        let sents = vec![vec!["zzz".to_string()], vec!["a".to_string(), "q".to_string()]];
        let enc = encode_note(&sents, &vocab, &emb, EncoderMode::Ave, &SifConfig::default());
        assert_eq!(enc.oov_only, [true, false]);
        assert_eq!(enc.vectors.row(0), array![0.0, 0.0]);
        assert_eq!(enc.vectors.row(1).to_owned(), emb.vector(vocab.id("a").unwrap()).to_owned());
    }
}
