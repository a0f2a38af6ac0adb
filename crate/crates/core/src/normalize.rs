//! Text cleaning, tokenization and sentence splitting for raw notes.
//!
//! Normalization lowercases, collapses de-identification masks (`[**...**]`)
//! into one token per information category, replaces digit runs with `[num]`
//! and unit words with `[unit]`, and turns every other symbol into a space.

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, PathContext, Result};

pub const DEFAULT_MAX_SENTENCE_TOKENS: usize = 512;

const DEFAULT_UNITS: &str = include_str!("../resources/units.txt");
const DEFAULT_CUES: &str = include_str!("../resources/mask_cues.txt");

static DATE_BODY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(\d{1,4}[-/]\d{1,2}([-/]\d{1,4})?|\d{4})\s*$").expect("valid regex")
});

static DEFAULT_NORMALIZER: LazyLock<Normalizer> = LazyLock::new(Normalizer::default);

/// The closed set of mask tokens that may appear in normalized text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mask {
    Date,
    Name,
    Location,
    Phone,
    Id,
    Num,
    Unit,
}

impl Mask {
    pub const ALL: [Mask; 7] = [
        Mask::Date,
        Mask::Name,
        Mask::Location,
        Mask::Phone,
        Mask::Id,
        Mask::Num,
        Mask::Unit,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Mask::Date => "[date]",
            Mask::Name => "[name]",
            Mask::Location => "[location]",
            Mask::Phone => "[phone]",
            Mask::Id => "[id]",
            Mask::Num => "[num]",
            Mask::Unit => "[unit]",
        }
    }

    pub fn from_token(token: &str) -> Option<Mask> {
        Mask::ALL.into_iter().find(|m| m.token() == token)
    }

    pub fn is_mask_token(token: &str) -> bool {
        Mask::from_token(token).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawNote {
    pub note_id: String,
    pub text: String,
}

impl RawNote {
    pub fn new(note_id: impl Into<String>, text: impl Into<String>) -> Self {
        RawNote {
            note_id: note_id.into(),
            text: text.into(),
        }
    }
}

/// A normalized sentence. `span` holds byte offsets into the note text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub span: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct Normalizer {
    units: HashSet<String>,
    cues: Vec<(Mask, String)>,
    max_sentence_tokens: usize,
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer {
            units: parse_units(DEFAULT_UNITS),
            cues: parse_cues(DEFAULT_CUES).expect("embedded cue table is valid"),
            max_sentence_tokens: DEFAULT_MAX_SENTENCE_TOKENS,
        }
    }
}

fn parse_units(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

fn parse_cues(text: &str) -> Result<Vec<(Mask, String)>> {
    let mut cues = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (mask, cue) = line.split_once(char::is_whitespace).ok_or(Error::Parse {
            line: i + 1,
            message: "expected `<mask> <cue>`".into(),
        })?;
        let mask = Mask::from_token(mask).ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("unknown mask token {mask:?}"),
        })?;
        cues.push((mask, cue.trim().to_lowercase()));
    }
    Ok(cues)
}

impl Normalizer {
    /// Builds a normalizer from a unit lexicon and a cue table, one entry per
    /// line. Either file may be omitted to keep the embedded default.
    pub fn from_files(units: Option<&Path>, cues: Option<&Path>) -> Result<Self> {
        let mut n = Normalizer::default();
        if let Some(path) = units {
            n.units = parse_units(&fs::read_to_string(path).with_path(path)?);
        }
        if let Some(path) = cues {
            n.cues = parse_cues(&fs::read_to_string(path).with_path(path)?)?;
        }
        Ok(n)
    }

    pub fn with_max_sentence_tokens(mut self, cap: usize) -> Self {
        assert!(cap >= 1, "sentence cap must be positive");
        self.max_sentence_tokens = cap;
        self
    }

    pub fn max_sentence_tokens(&self) -> usize {
        self.max_sentence_tokens
    }

    pub fn classify_privacy_mask(&self, body: &str) -> Mask {
        if DATE_BODY.is_match(body) {
            return Mask::Date;
        }
        let body = body.to_lowercase();
        self.cues
            .iter()
            .find(|(_, cue)| body.contains(cue.as_str()))
            .map_or(Mask::Id, |(mask, _)| *mask)
    }

    pub fn normalize(&self, raw: &str) -> String {
        let mut out = String::with_capacity(raw.len());
        self.scan(raw, |tok, _| {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(tok);
        });
        out
    }

    pub fn normalize_bytes(&self, raw: &[u8]) -> Result<String> {
        Ok(self.normalize(std::str::from_utf8(raw)?))
    }

    /// Emits every normalized token of `text` along with the byte range of
    /// the raw text it came from.
    fn scan(&self, text: &str, mut emit: impl FnMut(&str, (usize, usize))) {
        let mut i = 0;
        let mut word = String::new();
        while i < text.len() {
            let rest = &text[i..];
            if let Some(body_len) = privacy_mask_len(rest) {
                let body = &rest[3..3 + body_len];
                let end = i + body_len + 6;
                emit(self.classify_privacy_mask(body).token(), (i, end));
                i = end;
                continue;
            }
            if let Some(mask) = mask_token_prefix(rest) {
                let end = i + mask.token().len();
                emit(mask.token(), (i, end));
                i = end;
                continue;
            }
            let c = rest.chars().next().expect("non-empty");
            if c.is_numeric() {
                let end = i + digit_run_len(rest);
                emit(Mask::Num.token(), (i, end));
                i = end;
            } else if is_word_char(c) {
                let len: usize = rest
                    .chars()
                    .take_while(|&c| is_word_char(c))
                    .map(char::len_utf8)
                    .sum();
                let span = (i, i + len);
                // Lowercasing can yield marks or characters with no lowercase
                // form; those split the word.
                word.clear();
                for lc in rest[..len].chars().flat_map(char::to_lowercase) {
                    if is_word_char(lc) && !lc.is_uppercase() {
                        word.push(lc);
                    } else if !word.is_empty() {
                        self.emit_word(&word, span, &mut emit);
                        word.clear();
                    }
                }
                if !word.is_empty() {
                    self.emit_word(&word, span, &mut emit);
                }
                i += len;
            } else {
                i += c.len_utf8();
            }
        }
    }

    fn emit_word(&self, word: &str, span: (usize, usize), emit: &mut impl FnMut(&str, (usize, usize))) {
        if self.units.contains(word) {
            emit(Mask::Unit.token(), span);
        } else {
            emit(word, span);
        }
    }

    /// Normalizes and tokenizes one line, splitting at sentence-final
    /// punctuation followed by whitespace and capping sentence length.
    /// `offset` is the byte position of `line` within the note.
    pub(crate) fn split_line(&self, line: &str, offset: usize) -> Vec<Sentence> {
        let mut sentences = Vec::new();
        for (start, end) in sentence_bounds(line) {
            let mut tokens = Vec::new();
            self.scan(&line[start..end], |tok, (s, e)| {
                tokens.push((tok.to_string(), (offset + start + s, offset + start + e)));
            });
            for chunk in tokens.chunks(self.max_sentence_tokens) {
                sentences.push(Sentence {
                    span: (chunk[0].1 .0, chunk[chunk.len() - 1].1 .1),
                    tokens: chunk.iter().map(|(t, _)| t.clone()).collect(),
                });
            }
        }
        sentences
    }

    pub fn split_sentences(&self, note: &RawNote) -> Result<Vec<Sentence>> {
        let sentences: Vec<Sentence> = lines_with_offsets(&note.text)
            .flat_map(|(offset, line)| self.split_line(line, offset))
            .collect();
        if sentences.is_empty() {
            return Err(Error::EmptyNote {
                note_id: note.note_id.clone(),
            });
        }
        Ok(sentences)
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphabetic() && !c.is_numeric()
}

/// Length of the body of a `[**body**]` span at the start of `s`.
fn privacy_mask_len(s: &str) -> Option<usize> {
    s.strip_prefix("[**")?.find("**]")
}

fn mask_token_prefix(s: &str) -> Option<Mask> {
    if !s.starts_with('[') {
        return None;
    }
    Mask::ALL.into_iter().find(|m| {
        s.get(..m.token().len())
            .is_some_and(|p| p.eq_ignore_ascii_case(m.token()))
    })
}

/// Byte length of the digit run at the start of `s`, absorbing decimal
/// points and thousands separators that sit between digits.
fn digit_run_len(s: &str) -> usize {
    let mut len = 0;
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        if c.is_numeric() {
            len += c.len_utf8();
        } else if (c == '.' || c == ',') && chars.peek().is_some_and(|n| n.is_numeric()) {
            len += 1;
        } else {
            break;
        }
    }
    len
}

/// Byte ranges of the sentences on one line. Privacy masks are never split.
fn sentence_bounds(line: &str) -> Vec<(usize, usize)> {
    let bytes = line.as_bytes();
    let mut bounds = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if let Some(body) = privacy_mask_len(&line[i..]) {
            i += body + 6;
            continue;
        }
        let b = bytes[i];
        i += 1;
        if matches!(b, b'.' | b'!' | b'?') && bytes.get(i).is_none_or(|n| n.is_ascii_whitespace()) {
            bounds.push((start, i));
            start = i;
        }
    }
    if start < line.len() {
        bounds.push((start, line.len()));
    }
    bounds
}

/// Lines of `text` with their starting byte offsets; `\r\n` endings are
/// trimmed.
pub(crate) fn lines_with_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = 0;
    text.split('\n').map(move |line| {
        let start = offset;
        offset += line.len() + 1;
        (start, line.strip_suffix('\r').unwrap_or(line))
    })
}

pub fn normalize_text(raw: &str) -> String {
    DEFAULT_NORMALIZER.normalize(raw)
}

pub fn classify_privacy_mask(body: &str) -> Mask {
    DEFAULT_NORMALIZER.classify_privacy_mask(body)
}

pub fn split_sentences(note: &RawNote) -> Result<Vec<Sentence>> {
    DEFAULT_NORMALIZER.split_sentences(note)
}

pub fn tokenize(normalized: &str) -> Vec<String> {
    normalized.split_whitespace().map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalizes_dates_and_headings() {
        assert_eq!(normalize_text("Admission Date: [**2118-6-7**]"), "admission date [date]");
    }

    #[test]
    fn normalizes_numbers_and_units() {
        assert_eq!(normalize_text("Aspirin 81 mg PO daily"), "aspirin [num] [unit] po daily");
        assert_eq!(normalize_text("BP 120/80 mmHg"), "bp [num] [num] [unit]");
        assert_eq!(normalize_text("T 98.6 HR 72bpm"), "t [num] hr [num] [unit]");
        assert_eq!(normalize_text("1,000 units"), "[num] [unit]");
    }

    #[test]
    fn empty_and_symbol_only() {
        assert_eq!(normalize_text(""), "");
        assert_eq!(normalize_text("+++ --- ***"), "");
    }

    #[test]
    fn mask_tokens_survive_a_second_pass() {
        assert_eq!(normalize_text("[date] [NUM] [unit]"), "[date] [num] [unit]");
        assert_eq!(normalize_text("[bogus] [**"), "bogus");
    }

    #[test]
    fn rejects_invalid_utf8() {
        let n = Normalizer::default();
        assert!(matches!(n.normalize_bytes(&[0x66, 0xff, 0x66]), Err(Error::Encoding(_))));
        assert_eq!(n.normalize_bytes(b"Sex: F").unwrap(), "sex f");
    }

    #[test]
    fn privacy_mask_categories() {
        assert_eq!(classify_privacy_mask("2118-6-7"), Mask::Date);
        assert_eq!(classify_privacy_mask("Known lastname 1234"), Mask::Name);
        assert_eq!(classify_privacy_mask("xyz"), Mask::Id);
        assert_eq!(classify_privacy_mask("Hospital Ward Name 121"), Mask::Location);
        assert_eq!(classify_privacy_mask("Telephone/Fax (1) 1234"), Mask::Phone);
        assert_eq!(classify_privacy_mask("Month (only) 11"), Mask::Date);
        assert_eq!(classify_privacy_mask("MD Number(1) 123"), Mask::Id);
    }

    #[test]
    fn one_sentence_per_line() {
        let note = RawNote::new("n", "chief complaint:\nchest pain");
        let s = split_sentences(&note).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].tokens, ["chief", "complaint"]);
        assert_eq!(s[1].tokens, ["chest", "pain"]);
        assert_eq!(&note.text[s[1].span.0..s[1].span.1], "chest pain");
    }

    #[test]
    fn splits_at_terminal_punctuation() {
        let note = RawNote::new("n", "he was stable. he was discharged.");
        let s = split_sentences(&note).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].tokens, ["he", "was", "discharged"]);
        // decimals and masks are not sentence breaks
        let note = RawNote::new("n", "temp 98.6 today [**Known lastname. 12**] ok");
        assert_eq!(split_sentences(&note).unwrap().len(), 1);
    }

    #[test]
    fn long_lines_are_cut_into_capped_pieces() {
        let line = vec!["wbc"; 1100].join(" ");
        let s = split_sentences(&RawNote::new("n", line)).unwrap();
        let sizes: Vec<usize> = s.iter().map(|s| s.tokens.len()).collect();
        assert_eq!(sizes, [512, 512, 76]);
        assert_eq!(s[1].span.0, s[0].span.1 + 1);
    }

    #[test]
    fn empty_note_is_an_error() {
        let err = split_sentences(&RawNote::new("e", " \n ... \n")).unwrap_err();
        assert!(matches!(err, Error::EmptyNote { .. }));
    }

    #[test]
    fn tokenize_splits_on_whitespace() {
        assert_eq!(tokenize("aspirin [num] [unit]"), ["aspirin", "[num]", "[unit]"]);
        assert!(tokenize("  ").is_empty());
        assert_eq!(tokenize("[date] [date]"), ["[date]", "[date]"]);
    }

    #[test]
    fn loads_custom_tables() {
        let dir = tempfile::tempdir().unwrap();
        let units = dir.path().join("units.txt");
        let cues = dir.path().join("cues.txt");
        fs::write(&units, "tabs\n").unwrap();
        fs::write(&cues, "[location] clinic\n").unwrap();
        let n = Normalizer::from_files(Some(&units), Some(&cues)).unwrap();
        assert_eq!(n.normalize("2 tabs 5 mg"), "[num] [unit] [num] mg");
        assert_eq!(n.classify_privacy_mask("Clinic 4"), Mask::Location);
        fs::write(&cues, "[nope] clinic\n").unwrap();
        assert!(Normalizer::from_files(None, Some(&cues)).is_err());
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(s in "\\PC{0,60}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once);
        }

        #[test]
        fn idempotent_on_note_like_text(s in "([A-Za-z]{1,6}|[0-9]{1,4}(\\.[0-9])?|\\[\\*\\*[A-Za-z0-9 -]{0,8}\\*\\*\\]|[ .,:;/+%()\\[\\]-]){0,30}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once);
        }

        #[test]
        fn output_tokens_are_clean(s in "\\PC{0,60}") {
            for tok in tokenize(&normalize_text(&s)) {
                if tok.starts_with('[') || tok.ends_with(']') {
                    prop_assert!(Mask::is_mask_token(&tok), "stray bracket token {}", tok);
                } else {
                    prop_assert!(!tok.chars().any(|c| c.is_numeric()), "digit in {}", tok);
                    prop_assert!(!tok.chars().any(char::is_uppercase), "uppercase in {}", tok);
                }
            }
        }

        #[test]
        fn sentences_respect_cap_and_order(words in proptest::collection::vec("[a-z]{1,5}|[0-9]{1,3}|\\.|\n", 0..80), cap in 1usize..9) {
            let text = words.join(" ");
            let n = Normalizer::default().with_max_sentence_tokens(cap);
            if let Ok(sentences) = n.split_sentences(&RawNote::new("p", text.clone())) {
                let mut last_end = 0;
                for s in &sentences {
                    prop_assert!(!s.tokens.is_empty() && s.tokens.len() <= cap);
                    prop_assert!(s.span.0 >= last_end && s.span.1 > s.span.0);
                    last_end = s.span.1;
                }
                let total: usize = sentences.iter().map(|s| s.tokens.len()).sum();
                prop_assert_eq!(total, tokenize(&normalize_text(&text)).len());
            }
        }
    }
}
