use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::corpus::LabeledNote;
use crate::error::{Error, PathContext, Result};

/// Token inventory with training-corpus counts.
///
/// Ids are assigned by descending count, ties broken lexicographically, so
/// the same corpus always yields the same ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    total: u64,
}

impl Vocabulary {
    pub fn from_counts(counts: impl IntoIterator<Item = (String, u64)>) -> Result<Self> {
        let mut pairs: Vec<(String, u64)> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        if pairs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut index = HashMap::with_capacity(pairs.len());
        for (i, (tok, _)) in pairs.iter().enumerate() {
            if index.insert(tok.clone(), i).is_some() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("duplicate token {tok:?}"),
                });
            }
        }
        let total = pairs.iter().map(|p| p.1).sum();
        let (tokens, counts) = pairs.into_iter().unzip();
        Ok(Vocabulary {
            tokens,
            counts,
            index,
            total,
        })
    }

    pub fn from_sentences<'a, I>(sentences: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for s in sentences {
            for t in s {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        Self::from_counts(counts.into_iter().map(|(t, c)| (t.to_string(), c)))
    }

    /// Counts every sentence of every note, tag sentences included.
    pub fn from_corpus(notes: &[LabeledNote]) -> Result<Self> {
        let counts = notes
            .par_iter()
            .fold(HashMap::<&str, u64>::new, |mut acc, note| {
                for s in &note.sentences {
                    for t in &s.tokens {
                        *acc.entry(t.as_str()).or_default() += 1;
                    }
                }
                acc
            })
            .reduce(HashMap::new, |mut a, b| {
                for (t, c) in b {
                    *a.entry(t).or_default() += c;
                }
                a
            });
        Self::from_counts(counts.into_iter().map(|(t, c)| (t.to_string(), c)))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Unigram probability p(w) of an id.
    pub fn prob(&self, id: usize) -> f64 {
        self.counts[id] as f64 / self.total as f64
    }

    /// p(w) of a token; None when out of vocabulary.
    pub fn prob_of(&self, token: &str) -> Option<f64> {
        self.id(token).map(|i| self.prob(i))
    }

    /// Maps a sentence to ids, dropping unknown tokens.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.id(t)).collect()
    }

    /// Hex SHA-256 over `token\tcount\n` lines in id order.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (t, c) in self.tokens.iter().zip(&self.counts) {
            h.update(t.as_bytes());
            h.update(b"\t");
            h.update(c.to_string().as_bytes());
            h.update(b"\n");
        }
        hex(&h.finalize())
    }

    /// `token\tcount` lines in id order.
    pub fn counts_text(&self) -> String {
        let mut s = String::new();
        for (t, c) in self.tokens.iter().zip(&self.counts) {
            let _ = writeln!(s, "{t}\t{c}");
        }
        s
    }

    pub fn parse_counts(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Parse {
                line: i + 1,
                message: format!("expected `token<TAB>count`, got {line:?}"),
            };
            let (tok, count) = line.split_once('\t').ok_or_else(bad)?;
            let count: u64 = count.trim().parse().map_err(|_| bad())?;
            if tok.is_empty() || count == 0 {
                return Err(bad());
            }
            pairs.push((tok.to_string(), count));
        }
        Self::from_counts(pairs)
    }

    pub fn write_counts(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.counts_text()).with_path(path)
    }

    pub fn read_counts(path: &Path) -> Result<Self> {
        Self::parse_counts(&std::fs::read_to_string(path).with_path(path)?)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn ids_follow_count_then_token() {
        let sents = [toks("b a c a"), toks("c b a d")];
        let v = Vocabulary::from_sentences(sents.iter().map(Vec::as_slice)).unwrap();
        assert_eq!(v.tokens(), ["a", "b", "c", "d"]);
        assert_eq!(v.counts(), [3, 2, 2, 1]);
        assert_eq!(v.total(), 8);
        assert_eq!(v.prob_of("a"), Some(3.0 / 8.0));
        assert_eq!(v.prob_of("zzz"), None);
        assert_eq!(v.encode(&toks("d zzz a")), [3, 0]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let none: [Vec<String>; 1] = [vec![]];
        assert!(matches!(
            Vocabulary::from_sentences(none.iter().map(Vec::as_slice)),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn counts_text_round_trip() {
        let sents = [toks("x y y [num] z z z")];
        let v = Vocabulary::from_sentences(sents.iter().map(Vec::as_slice)).unwrap();
        let back = Vocabulary::parse_counts(&v.counts_text()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.hash(), v.hash());
        assert!(Vocabulary::parse_counts("a 3\n").is_err());
        assert!(Vocabulary::parse_counts("a\t1\na\t2\n").is_err());
    }

    #[test]
    fn hash_depends_on_counts() {
        let a = Vocabulary::from_counts([("a".into(), 2), ("b".into(), 1)]).unwrap();
        let b = Vocabulary::from_counts([("a".into(), 3), ("b".into(), 1)]).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one(words in prop::collection::vec("[a-e]{1,3}", 1..200)) {
            let sents = [words];
            let v = Vocabulary::from_sentences(sents.iter().map(Vec::as_slice)).unwrap();
            let sum: f64 = (0..v.len()).map(|i| v.prob(i)).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            prop_assert!(v.counts().windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn ids_do_not_depend_on_input_order(mut words in prop::collection::vec("[a-d]{1,2}", 1..60)) {
            let a = Vocabulary::from_sentences([words.as_slice()]).unwrap();
            words.reverse();
            let b = Vocabulary::from_sentences([words.as_slice()]).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
