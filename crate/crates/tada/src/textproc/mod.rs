//! Tokenization, vocabulary, and corpus handling.
//!
//! The tokenizer is word-level: lowercase, punctuation split off as single
//! tokens, "n't" contractions split ("doesn't" -> "does", "n't"). Sequences
//! carry a leading `[cls]` and trailing `[sep]` sentinel. Ids 0..4 are
//! reserved for PAD, UNK, CLS, SEP, MASK in that order.

pub mod lexicon;
pub mod templates;

use std::collections::HashMap;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;
pub const MASK_ID: usize = 4;

pub const RESERVED: [&str; 5] = ["[pad]", "[unk]", "[cls]", "[sep]", "[mask]"];

#[derive(Debug, Error)]
pub enum TextError {
    #[error("input is empty or whitespace-only")]
    EmptyInput,
    #[error("no usable sentences in {path}")]
    NoUsableLines { path: PathBuf },
    #[error("requested {requested} sentences but template capacity is {capacity}")]
    CapacityExceeded { requested: usize, capacity: usize },
    #[error("sentence count must be at least 1")]
    ZeroCount,
    #[error("failed to read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

// ── tokenization ────────────────────────────────────────────────────────

const SPLIT_PUNCT: &[char] = &['.', ',', '!', '?', ';', ':', '"', '(', ')'];

/// Lowercased word tokens without sentinels.
pub fn word_tokens(text: &str) -> Result<Vec<String>, TextError> {
    let lowered = text.to_lowercase();
    let mut out = Vec::new();
    for chunk in lowered.split_whitespace() {
        split_chunk(chunk, &mut out);
    }
    if out.is_empty() {
        return Err(TextError::EmptyInput);
    }
    Ok(out)
}

fn split_chunk(chunk: &str, out: &mut Vec<String>) {
    let mut rest = chunk;
    // peel leading punctuation
    while let Some(c) = rest.chars().next() {
        if SPLIT_PUNCT.contains(&c) {
            out.push(c.to_string());
            rest = &rest[c.len_utf8()..];
        } else {
            break;
        }
    }
    // peel trailing punctuation, remembering it for after the core
    let mut tail = Vec::new();
    while let Some(c) = rest.chars().last() {
        if SPLIT_PUNCT.contains(&c) {
            tail.push(c.to_string());
            rest = &rest[..rest.len() - c.len_utf8()];
        } else {
            break;
        }
    }
    if !rest.is_empty() {
        if let Some(stem) = rest.strip_suffix("n't") {
            if !stem.is_empty() {
                out.push(stem.to_string());
            }
            out.push("n't".to_string());
        } else {
            out.push(rest.to_string());
        }
    }
    out.extend(tail.into_iter().rev());
}

/// Inverse of `word_tokens` up to casing: punctuation and "n't" reattach to
/// the preceding word.
pub fn detokenize(words: &[String]) -> String {
    let mut out = String::new();
    for w in words {
        let attach = w == "n't" || (w.len() == 1 && w.chars().all(|c| SPLIT_PUNCT.contains(&c)));
        if !out.is_empty() && !attach {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

// ── vocabulary ──────────────────────────────────────────────────────────

/// Word/id bijection with fixed reserved entries. Non-reserved words are
/// ordered by descending corpus frequency, ties broken alphabetically, so
/// the mapping is stable for a given corpus and cutoff.
#[derive(Debug, Clone)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn build(corpus: &Corpus, min_freq: usize) -> Vocab {
        Self::build_with_extras(corpus, min_freq, &[])
    }

    /// Like `build`, but guarantees `extras` are present regardless of
    /// frequency; they follow the frequency-ordered block, sorted.
    pub fn build_with_extras(corpus: &Corpus, min_freq: usize, extras: &[&str]) -> Vocab {
        let min_freq = min_freq.max(1);
        let mut freq: HashMap<String, usize> = HashMap::new();
        for sentence in corpus.sentences() {
            for w in word_tokens(sentence).expect("corpus sentences are non-empty") {
                *freq.entry(w).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = freq
            .into_iter()
            .filter(|(_, c)| *c >= min_freq)
            .collect();
        kept.sort_by(|(wa, ca), (wb, cb)| cb.cmp(ca).then_with(|| wa.cmp(wb)));

        let mut words: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        words.extend(kept.into_iter().map(|(w, _)| w));
        let mut sorted_extras: Vec<&str> = extras.to_vec();
        sorted_extras.sort_unstable();
        for extra in sorted_extras {
            if !words.iter().any(|w| w == extra) {
                words.push(extra.to_string());
            }
        }
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocab { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id for a word; unknown words map to UNK.
    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

// ── token sequences ─────────────────────────────────────────────────────

/// A tokenized sentence: `[cls] w1 .. wn [sep]` with aligned vocab ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    tokens: Vec<String>,
    ids: Vec<usize>,
}

impl TokenSeq {
    /// Wrap interior words in CLS/SEP and look up ids (OOV becomes UNK).
    pub fn from_words(words: &[String], vocab: &Vocab) -> TokenSeq {
        let mut tokens = Vec::with_capacity(words.len() + 2);
        tokens.push(RESERVED[CLS_ID].to_string());
        tokens.extend_from_slice(words);
        tokens.push(RESERVED[SEP_ID].to_string());
        let ids = tokens.iter().map(|w| vocab.id(w)).collect();
        TokenSeq { tokens, ids }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// Interior words, sentinels excluded.
    pub fn words(&self) -> &[String] {
        &self.tokens[1..self.tokens.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn text(&self) -> String {
        detokenize(self.words())
    }
}

/// Tokenize raw text against a vocabulary.
pub fn tokenize(text: &str, vocab: &Vocab) -> Result<TokenSeq, TextError> {
    let words = word_tokens(text)?;
    Ok(TokenSeq::from_words(&words, vocab))
}

// ── corpora ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Generated,
    Ingested,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    sentences: Vec<String>,
    provenance: Provenance,
}

impl Corpus {
    fn new(sentences: Vec<String>, provenance: Provenance) -> Corpus {
        debug_assert!(sentences.iter().all(|s| !s.trim().is_empty()));
        Corpus {
            sentences,
            provenance,
        }
    }

    /// Wrap caller-provided sentences: blanks rejected, duplicates dropped.
    pub fn from_sentences(
        sentences: Vec<String>,
        provenance: Provenance,
    ) -> Result<Corpus, TextError> {
        let mut seen = HashMap::new();
        let mut kept = Vec::with_capacity(sentences.len());
        for s in sentences {
            if s.trim().is_empty() {
                return Err(TextError::EmptyInput);
            }
            if seen.insert(s.clone(), ()).is_none() {
                kept.push(s);
            }
        }
        if kept.is_empty() {
            return Err(TextError::EmptyInput);
        }
        Ok(Corpus::new(kept, provenance))
    }

    pub fn sentences(&self) -> &[String] {
        &self.sentences
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Number of distinct sentences the template generator can produce.
pub fn template_capacity() -> usize {
    templates::total_capacity()
}

/// Generate `n` distinct template sentences, deterministic in `seed`.
pub fn gen_template_corpus(n: usize, seed: u64) -> Result<Corpus, TextError> {
    if n == 0 {
        return Err(TextError::ZeroCount);
    }
    let capacity = templates::total_capacity();
    if n > capacity {
        return Err(TextError::CapacityExceeded {
            requested: n,
            capacity,
        });
    }
    let sentences = templates::generate(n, seed);
    debug_assert_eq!(sentences.len(), n);
    Ok(Corpus::new(sentences, Provenance::Generated))
}

/// Read one sentence per line; blank lines skipped, duplicates dropped
/// (first occurrence wins), CRLF treated as LF.
pub fn ingest_corpus(path: &Path) -> Result<Corpus, TextError> {
    let raw = std::fs::read_to_string(path).map_err(|source| TextError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut seen = HashMap::new();
    let mut sentences = Vec::new();
    for line in raw.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if seen.insert(line.to_string(), ()).is_none() {
            sentences.push(line.to_string());
        }
    }
    if sentences.is_empty() {
        return Err(TextError::NoUsableLines {
            path: path.to_path_buf(),
        });
    }
    Ok(Corpus::new(sentences, Provenance::Ingested))
}
