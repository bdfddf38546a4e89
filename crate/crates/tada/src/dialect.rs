//! Rule-based SAE to pseudo-dialect rewriting and parallel pair generation.
//!
//! Six rules rewrite interior tokens only; sentinels are never touched.
//! `docs/rules.md` gives the full matcher and rewrite definitions. Rules are
//! applied in one fixed order so rewrite interactions are deterministic:
//! copula deletion, negative concord, zero past, zero plural, completive
//! done, inversion drop.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil;
use crate::rng::{derived, Rng};
use crate::textproc::{lexicon as lex, Corpus, TextError, TokenSeq, Vocab};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    CopulaDeletion,
    NegativeConcord,
    ZeroPast,
    ZeroPluralAfterNumeral,
    CompletiveDone,
    InversionDropInQuestion,
}

/// Fixed application order.
pub const RULE_ORDER: [RuleId; 6] = [
    RuleId::CopulaDeletion,
    RuleId::NegativeConcord,
    RuleId::ZeroPast,
    RuleId::ZeroPluralAfterNumeral,
    RuleId::CompletiveDone,
    RuleId::InversionDropInQuestion,
];

impl RuleId {
    pub fn as_str(&self) -> &'static str {
        match self {
            RuleId::CopulaDeletion => "copula_deletion",
            RuleId::NegativeConcord => "negative_concord",
            RuleId::ZeroPast => "zero_past",
            RuleId::ZeroPluralAfterNumeral => "zero_plural_after_numeral",
            RuleId::CompletiveDone => "completive_done",
            RuleId::InversionDropInQuestion => "inversion_drop_in_question",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleId {
    type Err = DialectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RULE_ORDER
            .iter()
            .find(|r| r.as_str() == s)
            .copied()
            .ok_or_else(|| DialectError::UnknownRule(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum DialectError {
    #[error("unknown rule {0:?}")]
    UnknownRule(String),
    #[error("unknown profile {0:?}; expected aae, indian, nigerian, singapore, or none")]
    UnknownProfile(String),
    #[error("density {value} for rule {rule} is outside [0, 1]")]
    InvalidDensity { rule: RuleId, value: f64 },
    #[error("requested {requested} pairs but corpus has {available} sentences")]
    PairCountExceedsCorpus { requested: usize, available: usize },
    #[error("pair count must be at least 1")]
    ZeroPairs,
    #[error("failed to access {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad pair record at {path}:{line}: {msg}")]
    BadRecord {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Text(#[from] TextError),
}

// ── profiles ────────────────────────────────────────────────────────────

/// Per-rule application densities for one pseudo-dialect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleProfile {
    pub name: String,
    densities: BTreeMap<RuleId, f64>,
}

impl RuleProfile {
    pub fn new(
        name: impl Into<String>,
        densities: BTreeMap<RuleId, f64>,
    ) -> Result<RuleProfile, DialectError> {
        for (&rule, &value) in &densities {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(DialectError::InvalidDensity { rule, value });
            }
        }
        Ok(RuleProfile {
            name: name.into(),
            densities,
        })
    }

    fn proxy(name: &str, rules: &[RuleId], density: f64) -> RuleProfile {
        let densities = rules.iter().map(|&r| (r, density)).collect();
        RuleProfile {
            name: name.to_string(),
            densities,
        }
    }

    pub fn aae() -> RuleProfile {
        Self::proxy(
            "AAE_PROXY",
            &[
                RuleId::CopulaDeletion,
                RuleId::NegativeConcord,
                RuleId::CompletiveDone,
                RuleId::ZeroPast,
            ],
            0.8,
        )
    }

    pub fn singapore() -> RuleProfile {
        Self::proxy(
            "SINGAPORE_PROXY",
            &[
                RuleId::CopulaDeletion,
                RuleId::ZeroPast,
                RuleId::ZeroPluralAfterNumeral,
                RuleId::InversionDropInQuestion,
            ],
            0.8,
        )
    }

    pub fn indian() -> RuleProfile {
        Self::proxy(
            "INDIAN_PROXY",
            &[
                RuleId::InversionDropInQuestion,
                RuleId::ZeroPluralAfterNumeral,
                RuleId::CopulaDeletion,
            ],
            0.5,
        )
    }

    pub fn nigerian() -> RuleProfile {
        Self::proxy(
            "NIGERIAN_PROXY",
            &[
                RuleId::ZeroPast,
                RuleId::NegativeConcord,
                RuleId::CompletiveDone,
            ],
            0.5,
        )
    }

    /// Identity profile: every density zero.
    pub fn none() -> RuleProfile {
        RuleProfile {
            name: "none".to_string(),
            densities: BTreeMap::new(),
        }
    }

    pub fn by_name(name: &str) -> Result<RuleProfile, DialectError> {
        match name.to_lowercase().as_str() {
            "aae" | "aae_proxy" => Ok(Self::aae()),
            "singapore" | "singapore_proxy" => Ok(Self::singapore()),
            "indian" | "indian_proxy" => Ok(Self::indian()),
            "nigerian" | "nigerian_proxy" => Ok(Self::nigerian()),
            "none" => Ok(Self::none()),
            other => Err(DialectError::UnknownProfile(other.to_string())),
        }
    }

    pub fn all_proxies() -> Vec<RuleProfile> {
        vec![
            Self::aae(),
            Self::indian(),
            Self::nigerian(),
            Self::singapore(),
        ]
    }

    pub fn density(&self, rule: RuleId) -> f64 {
        self.densities.get(&rule).copied().unwrap_or(0.0)
    }

    /// Override one density, e.g. from a config file.
    pub fn set_density(&mut self, rule: RuleId, value: f64) -> Result<(), DialectError> {
        if !(0.0..=1.0).contains(&value) || value.is_nan() {
            return Err(DialectError::InvalidDensity { rule, value });
        }
        self.densities.insert(rule, value);
        Ok(())
    }

    pub fn densities(&self) -> &BTreeMap<RuleId, f64> {
        &self.densities
    }
}

// ── matching and rewriting ──────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq)]
enum Edit {
    Remove(usize),
    Replace(usize, &'static str),
    Insert(usize, &'static str),
}

impl Edit {
    fn position(&self) -> usize {
        match self {
            Edit::Remove(i) | Edit::Replace(i, _) | Edit::Insert(i, _) => *i,
        }
    }
}

/// All matcher hits of one rule on interior words, left to right.
fn rule_edits(rule: RuleId, words: &[String]) -> Vec<Edit> {
    let mut edits = Vec::new();
    match rule {
        RuleId::CopulaDeletion => {
            for i in 1..words.len().saturating_sub(1) {
                let w = words[i].as_str();
                if (w == "is" || w == "are")
                    && lex::is_subject_word(&words[i - 1])
                    && (lex::is_adjective(&words[i + 1]) || lex::is_ing_form(&words[i + 1]))
                {
                    edits.push(Edit::Remove(i));
                }
            }
        }
        RuleId::NegativeConcord => {
            if words.iter().any(|w| lex::is_negator(w)) {
                for (i, w) in words.iter().enumerate() {
                    if let Some(rewrite) = lex::any_rewrite(w) {
                        edits.push(Edit::Replace(i, rewrite));
                    }
                }
            }
        }
        RuleId::ZeroPast => {
            for (i, w) in words.iter().enumerate() {
                if let Some(base) = lex::past_to_base(w) {
                    edits.push(Edit::Replace(i, base));
                }
            }
        }
        RuleId::ZeroPluralAfterNumeral => {
            for i in 1..words.len() {
                if lex::is_numeral(&words[i - 1]) {
                    if let Some(singular) = lex::plural_to_singular(&words[i]) {
                        edits.push(Edit::Replace(i, singular));
                    }
                }
            }
        }
        RuleId::CompletiveDone => {
            for (i, w) in words.iter().enumerate() {
                if lex::is_past_form(w) {
                    edits.push(Edit::Insert(i, "done"));
                }
            }
        }
        RuleId::InversionDropInQuestion => {
            if words.len() >= 2
                && (words[0] == "does" || words[0] == "do")
                && words.last().map(String::as_str) == Some("?")
            {
                edits.push(Edit::Remove(0));
            }
        }
    }
    edits
}

/// Number of matcher hits for `rule` on a sentence as-is.
pub fn match_count(rule: RuleId, seq: &TokenSeq) -> usize {
    rule_edits(rule, seq.words()).len()
}

fn apply_edits(words: &mut Vec<String>, mut edits: Vec<Edit>) {
    // right-to-left so earlier positions stay valid
    edits.sort_by_key(|e| std::cmp::Reverse(e.position()));
    for edit in edits {
        match edit {
            Edit::Remove(i) => {
                words.remove(i);
            }
            Edit::Replace(i, w) => {
                words[i] = w.to_string();
            }
            Edit::Insert(i, w) => {
                words.insert(i, w.to_string());
            }
        }
    }
}

fn apply_rule_words(
    rule: RuleId,
    words: &mut Vec<String>,
    density: f64,
    rng: &mut Rng,
) -> bool {
    let candidates = rule_edits(rule, words);
    // one Bernoulli draw per match, left to right, for determinism
    let fired: Vec<Edit> = candidates
        .into_iter()
        .filter(|_| density > 0.0 && rng.gen::<f64>() < density)
        .collect();
    let applied = !fired.is_empty();
    apply_edits(words, fired);
    applied
}

/// Apply one rule to every match (density 1), deterministically.
pub fn apply_rule(rule: RuleId, seq: &TokenSeq, vocab: &Vocab) -> (TokenSeq, bool) {
    let mut words = seq.words().to_vec();
    let edits = rule_edits(rule, &words);
    let applied = !edits.is_empty();
    apply_edits(&mut words, edits);
    (TokenSeq::from_words(&words, vocab), applied)
}

// ── translation ─────────────────────────────────────────────────────────

/// Aligned (SAE, dialect) sentence pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelPair {
    pub sae: TokenSeq,
    pub dialect: TokenSeq,
    pub rules_applied: Vec<RuleId>,
}

/// Rewrite one sentence under a profile. Each rule fires per match with
/// probability equal to its density, in the fixed rule order.
pub fn translate(sae: &TokenSeq, profile: &RuleProfile, vocab: &Vocab, rng: &mut Rng) -> ParallelPair {
    let mut words = sae.words().to_vec();
    let mut rules_applied = Vec::new();
    for rule in RULE_ORDER {
        if apply_rule_words(rule, &mut words, profile.density(rule), rng) {
            rules_applied.push(rule);
        }
    }
    ParallelPair {
        sae: sae.clone(),
        dialect: TokenSeq::from_words(&words, vocab),
        rules_applied,
    }
}

/// Translate the first `n` corpus sentences with per-sentence derived seeds.
pub fn gen_parallel(
    corpus: &Corpus,
    profile: &RuleProfile,
    vocab: &Vocab,
    n: usize,
    seed: u64,
) -> Result<Vec<ParallelPair>, DialectError> {
    if n == 0 {
        return Err(DialectError::ZeroPairs);
    }
    if n > corpus.len() {
        return Err(DialectError::PairCountExceedsCorpus {
            requested: n,
            available: corpus.len(),
        });
    }
    let mut pairs = Vec::with_capacity(n);
    for (i, sentence) in corpus.sentences()[..n].iter().enumerate() {
        let sae = crate::textproc::tokenize(sentence, vocab)?;
        let mut rng = derived(seed, "translate", i as u64);
        pairs.push(translate(&sae, profile, vocab, &mut rng));
    }
    Ok(pairs)
}

// ── analysis helpers ────────────────────────────────────────────────────

/// Per-rule count of corpus sentences with at least one matcher hit.
pub fn trigger_counts(corpus: &Corpus, vocab: &Vocab) -> Result<BTreeMap<RuleId, usize>, DialectError> {
    let mut counts: BTreeMap<RuleId, usize> = RULE_ORDER.iter().map(|&r| (r, 0)).collect();
    for sentence in corpus.sentences() {
        let seq = crate::textproc::tokenize(sentence, vocab)?;
        for rule in RULE_ORDER {
            if match_count(rule, &seq) > 0 {
                *counts.get_mut(&rule).unwrap() += 1;
            }
        }
    }
    Ok(counts)
}

/// Analytic probability that `translate` leaves a sentence unchanged: on the
/// all-unchanged path every rule still sees the original sentence, so the
/// events are independent Bernoulli draws per original match.
pub fn unchanged_probability(seq: &TokenSeq, profile: &RuleProfile) -> f64 {
    RULE_ORDER
        .iter()
        .map(|&rule| (1.0 - profile.density(rule)).powi(match_count(rule, seq) as i32))
        .product()
}

// ── persistence ─────────────────────────────────────────────────────────

#[derive(Debug, Serialize, Deserialize)]
struct PairRecord {
    sae: String,
    dialect: String,
    rules_applied: Vec<RuleId>,
}

/// Write pairs as JSON-lines, one object per pair.
pub fn write_pairs(path: &Path, pairs: &[ParallelPair]) -> Result<(), DialectError> {
    let mut out = String::new();
    for pair in pairs {
        let record = PairRecord {
            sae: pair.sae.text(),
            dialect: pair.dialect.text(),
            rules_applied: pair.rules_applied.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("pair record serializes"));
        out.push('\n');
    }
    fsutil::atomic_write(path, out.as_bytes()).map_err(|source| DialectError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Read pairs written by [`write_pairs`], re-tokenizing against `vocab`.
pub fn read_pairs(path: &Path, vocab: &Vocab) -> Result<Vec<ParallelPair>, DialectError> {
    let file = std::fs::File::open(path).map_err(|source| DialectError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut pairs = Vec::new();
    for (lineno, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DialectError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PairRecord =
            serde_json::from_str(&line).map_err(|e| DialectError::BadRecord {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        let sae = crate::textproc::tokenize(&record.sae, vocab)?;
        let dialect = crate::textproc::tokenize(&record.dialect, vocab)?;
        pairs.push(ParallelPair {
            sae,
            dialect,
            rules_applied: record.rules_applied,
        });
    }
    if pairs.is_empty() {
        return Err(DialectError::BadRecord {
            path: path.to_path_buf(),
            line: 0,
            msg: "no pair records".to_string(),
        });
    }
    Ok(pairs)
}
