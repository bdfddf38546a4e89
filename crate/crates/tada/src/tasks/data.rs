//! Task dataset generation over the closed template lexicons.
//!
//! Every surface word comes from the template lexicon, so task inputs encode
//! without UNK against a corpus-built vocabulary and the dialect rules fire
//! on them the same way they fire on corpus text.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::TaskError;
use crate::dialect::{translate, RuleProfile};
use crate::rng::{derived, Rng};
use crate::textproc::{gen_template_corpus, lexicon, tokenize, TokenSeq, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskName {
    Polarity,
    Acceptability,
    Similarity,
}

impl TaskName {
    pub fn all() -> [TaskName; 3] {
        [TaskName::Polarity, TaskName::Acceptability, TaskName::Similarity]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskName::Polarity => "polarity",
            TaskName::Acceptability => "acceptability",
            TaskName::Similarity => "similarity",
        }
    }
}

impl std::fmt::Display for TaskName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskName {
    type Err = String;

    fn from_str(s: &str) -> Result<TaskName, String> {
        match s {
            "polarity" => Ok(TaskName::Polarity),
            "acceptability" => Ok(TaskName::Acceptability),
            "similarity" => Ok(TaskName::Similarity),
            other => Err(format!("unknown task '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMetric {
    Accuracy,
    Matthews,
    PearsonSpearmanMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: TaskName,
    pub kind: TaskKind,
    pub metric: TaskMetric,
}

impl TaskSpec {
    pub fn of(name: TaskName) -> TaskSpec {
        let (kind, metric) = match name {
            TaskName::Polarity => (TaskKind::Classification, TaskMetric::Accuracy),
            TaskName::Acceptability => (TaskKind::Classification, TaskMetric::Matthews),
            TaskName::Similarity => (TaskKind::Regression, TaskMetric::PearsonSpearmanMean),
        };
        TaskSpec { name, kind, metric }
    }
}

/// One task instance: a single sentence, or a pair for SIMILARITY.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub texts: Vec<String>,
    pub ids: Vec<usize>,
    pub label: f64,
}

#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub spec: TaskSpec,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
}

impl TaskDataset {
    pub fn split(&self, name: &str) -> &[Example] {
        match name {
            "train" => &self.train,
            "dev" => &self.dev,
            _ => &self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Default for TaskSizes {
    fn default() -> Self {
        TaskSizes { train: 200, dev: 50, test: 100 }
    }
}

impl TaskSizes {
    pub fn total(&self) -> usize {
        self.train + self.dev + self.test
    }

    fn validate(&self) -> Result<(), TaskError> {
        if self.train < 200 || self.dev < 50 || self.test < 100 {
            return Err(TaskError::SizesTooSmall {
                train: self.train,
                dev: self.dev,
                test: self.test,
            });
        }
        Ok(())
    }
}

const ATTEMPTS_PER_EXAMPLE: usize = 200;

// ── shared generation helpers ───────────────────────────────────────────

/// Subject phrase plus its agreeing copula.
fn subject(rng: &mut Rng) -> (String, &'static str) {
    let nouns = lexicon::NOUNS;
    match rng.gen_range(0..4) {
        0 => (lexicon::SINGULAR_PRONOUNS.choose(rng).unwrap().to_string(), "is"),
        1 => (format!("the {}", nouns.choose(rng).unwrap().singular), "is"),
        2 => (lexicon::PLURAL_PRONOUNS.choose(rng).unwrap().to_string(), "are"),
        _ => (format!("the {}", nouns.choose(rng).unwrap().plural), "are"),
    }
}

fn encode_single(text: &str, vocab: &Vocab) -> Result<Example, TaskError> {
    let seq = tokenize(text, vocab)?;
    Ok(Example {
        texts: vec![text.to_string()],
        ids: seq.ids().to_vec(),
        label: 0.0,
    })
}

/// `[cls] s1 [sep] s2 [sep]`.
fn encode_pair(s1: &str, s2: &str, vocab: &Vocab) -> Result<Example, TaskError> {
    let a = tokenize(s1, vocab)?;
    let b = tokenize(s2, vocab)?;
    let mut ids = a.ids().to_vec();
    ids.extend_from_slice(&b.ids()[1..]);
    Ok(Example {
        texts: vec![s1.to_string(), s2.to_string()],
        ids,
        label: 0.0,
    })
}

fn pair_ids(seqs: &[TokenSeq]) -> Vec<usize> {
    let mut ids = seqs[0].ids().to_vec();
    for s in &seqs[1..] {
        ids.extend_from_slice(&s.ids()[1..]);
    }
    ids
}

// ── POLARITY ────────────────────────────────────────────────────────────

/// One fixed frame, three distinct same-lexicon adjectives. Uniform shape
/// keeps within-class CLS scatter down to subject and word identity, and
/// the triple carries the class three times per sentence; both matter for
/// linear separability at this scale.
fn polarity_sentence(label: usize, rng: &mut Rng) -> String {
    let lex = if label == 1 {
        lexicon::POSITIVE_ADJECTIVES
    } else {
        lexicon::NEGATIVE_ADJECTIVES
    };
    let noun = lexicon::NOUNS.choose(rng).unwrap();
    let (subj, cop) = if rng.gen_bool(0.5) {
        (noun.singular, "is")
    } else {
        (noun.plural, "are")
    };
    let mut adjs: Vec<&str> = lex.choose_multiple(rng, 3).copied().collect();
    adjs.shuffle(rng);
    format!("the {subj} {cop} {} and {} and {} .", adjs[0], adjs[1], adjs[2])
}

fn gen_polarity(vocab: &Vocab, sizes: &TaskSizes, seed: u64) -> Result<TaskDataset, TaskError> {
    let mut seen = BTreeSet::new();
    let mut rng = derived(seed, "tasks/polarity", 0);
    let mut fill = |count: usize| -> Result<Vec<Example>, TaskError> {
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let label = 1 - i % 2;
            let text = (0..ATTEMPTS_PER_EXAMPLE)
                .map(|_| polarity_sentence(label, &mut rng))
                .find(|t| seen.insert(t.clone()))
                .ok_or(TaskError::CapacityExceeded {
                    task: "polarity",
                    need: count,
                    got: i,
                })?;
            let mut ex = encode_single(&text, vocab)?;
            ex.label = label as f64;
            out.push(ex);
        }
        Ok(out)
    };
    Ok(TaskDataset {
        spec: TaskSpec::of(TaskName::Polarity),
        train: fill(sizes.train)?,
        dev: fill(sizes.dev)?,
        test: fill(sizes.test)?,
    })
}

// ── ACCEPTABILITY ───────────────────────────────────────────────────────

/// Shuffle the words before the terminal punctuation until the order changes.
fn shuffled_words(words: &[String], rng: &mut Rng) -> Option<Vec<String>> {
    let body = words.len() - 1;
    if body < 2 {
        return None;
    }
    let mut out = words.to_vec();
    for _ in 0..ATTEMPTS_PER_EXAMPLE {
        out[..body].shuffle(rng);
        if out[..body] != words[..body] {
            return Some(out);
        }
    }
    None
}

fn gen_acceptability(
    vocab: &Vocab,
    sizes: &TaskSizes,
    seed: u64,
) -> Result<TaskDataset, TaskError> {
    // headroom lets a source be skipped when it collides with an earlier shuffle
    let corpus = gen_template_corpus(sizes.total() + 16, derive(seed, 1))?;
    let mut sources = corpus.sentences().iter();
    let mut rng = derived(seed, "tasks/acceptability", 0);
    let mut seen = BTreeSet::new();
    let mut fill = |count: usize| -> Result<Vec<Example>, TaskError> {
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let capacity = |got: usize| TaskError::CapacityExceeded {
                task: "acceptability",
                need: count,
                got,
            };
            let label = 1 - i % 2;
            let text = if label == 1 {
                sources
                    .by_ref()
                    .find(|s| seen.insert((*s).clone()))
                    .ok_or_else(|| capacity(i))?
                    .clone()
            } else {
                let source = sources.next().ok_or_else(|| capacity(i))?;
                let words = tokenize(source, vocab)?.words().to_vec();
                (0..ATTEMPTS_PER_EXAMPLE)
                    .find_map(|_| {
                        let shuffled = shuffled_words(&words, &mut rng)?;
                        let text = TokenSeq::from_words(&shuffled, vocab).text();
                        seen.insert(text.clone()).then_some(text)
                    })
                    .ok_or_else(|| capacity(i))?
            };
            let mut ex = encode_single(&text, vocab)?;
            ex.label = label as f64;
            out.push(ex);
        }
        Ok(out)
    };
    Ok(TaskDataset {
        spec: TaskSpec::of(TaskName::Acceptability),
        train: fill(sizes.train)?,
        dev: fill(sizes.dev)?,
        test: fill(sizes.test)?,
    })
}

fn derive(seed: u64, ix: u64) -> u64 {
    crate::rng::derive_seed(seed, "tasks/source", ix)
}

// ── SIMILARITY ──────────────────────────────────────────────────────────

/// Words that carry lexical content: lexicon nouns, verbs, adjectives,
/// numerals. Pronouns, copulas, determiners, and punctuation do not count.
pub fn is_content_word(w: &str) -> bool {
    lexicon::NOUNS.iter().any(|n| n.singular == w || n.plural == w)
        || lexicon::VERBS
            .iter()
            .any(|v| v.base == w || v.third == w || v.past == w || v.ing == w)
        || lexicon::is_adjective(w)
        || lexicon::is_numeral(w)
}

pub fn content_jaccard(s1: &str, s2: &str) -> Result<f64, TaskError> {
    let set = |s: &str| -> Result<BTreeSet<String>, TaskError> {
        Ok(crate::textproc::word_tokens(s)?
            .into_iter()
            .filter(|w| is_content_word(w))
            .collect())
    };
    let a = set(s1)?;
    let b = set(s2)?;
    let union = a.union(&b).count();
    if union == 0 {
        return Ok(0.0);
    }
    Ok(a.intersection(&b).count() as f64 / union as f64)
}

/// Five content slots: "the n1 v1 the n2 and v2 the n3 ."
fn render_svo(slots: &[&str; 5]) -> String {
    format!(
        "the {} {} the {} and {} the {} .",
        slots[0], slots[1], slots[2], slots[3], slots[4]
    )
}

fn similarity_pair(replacements: usize, rng: &mut Rng) -> (String, String) {
    let mut nouns: Vec<&str> = lexicon::NOUNS.iter().map(|n| n.singular).collect();
    let mut verbs: Vec<&str> = lexicon::VERBS.iter().map(|v| v.past).collect();
    nouns.shuffle(rng);
    verbs.shuffle(rng);
    // slots 0, 2, 4 are nouns; 1, 3 are verbs; pools are pre-shuffled and
    // disjoint prefixes keep every slot value distinct across both sentences
    let s1 = [nouns[0], verbs[0], nouns[1], verbs[1], nouns[2]];
    let mut s2 = s1;
    let mut replace: Vec<usize> = (0..5).collect();
    replace.shuffle(rng);
    let (mut next_noun, mut next_verb) = (3, 2);
    for &slot in replace.iter().take(replacements) {
        if slot % 2 == 0 {
            s2[slot] = nouns[next_noun];
            next_noun += 1;
        } else {
            s2[slot] = verbs[next_verb];
            next_verb += 1;
        }
    }
    (render_svo(&s1), render_svo(&s2))
}

fn gen_similarity(vocab: &Vocab, sizes: &TaskSizes, seed: u64) -> Result<TaskDataset, TaskError> {
    let mut rng = derived(seed, "tasks/similarity", 0);
    let mut seen = BTreeSet::new();
    let mut fill = |count: usize| -> Result<Vec<Example>, TaskError> {
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let replacements = i % 6;
            let (s1, s2) = (0..ATTEMPTS_PER_EXAMPLE)
                .map(|_| similarity_pair(replacements, &mut rng))
                .find(|(a, b)| seen.insert(format!("{a}\t{b}")))
                .ok_or(TaskError::CapacityExceeded {
                    task: "similarity",
                    need: count,
                    got: i,
                })?;
            let mut ex = encode_pair(&s1, &s2, vocab)?;
            ex.label = content_jaccard(&s1, &s2)?;
            out.push(ex);
        }
        Ok(out)
    };
    Ok(TaskDataset {
        spec: TaskSpec::of(TaskName::Similarity),
        train: fill(sizes.train)?,
        dev: fill(sizes.dev)?,
        test: fill(sizes.test)?,
    })
}

/// Generate the three task datasets in a fixed order.
pub fn gen_tasks(
    vocab: &Vocab,
    sizes: &TaskSizes,
    seed: u64,
) -> Result<Vec<TaskDataset>, TaskError> {
    sizes.validate()?;
    Ok(vec![
        gen_polarity(vocab, sizes, seed)?,
        gen_acceptability(vocab, sizes, seed)?,
        gen_similarity(vocab, sizes, seed)?,
    ])
}

/// Translate a split's inputs under a profile; labels and order carry over
/// unchanged. Sentence pairs are translated sentence by sentence.
pub fn dialect_split(
    examples: &[Example],
    profile: &RuleProfile,
    vocab: &Vocab,
    seed: u64,
) -> Result<Vec<Example>, TaskError> {
    examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut rng = derived(seed, "tasks/dialect", i as u64);
            let seqs = ex
                .texts
                .iter()
                .map(|t| {
                    let sae = tokenize(t, vocab)?;
                    Ok(translate(&sae, profile, vocab, &mut rng).dialect)
                })
                .collect::<Result<Vec<_>, TaskError>>()?;
            Ok(Example {
                texts: seqs.iter().map(TokenSeq::text).collect(),
                ids: pair_ids(&seqs),
                label: ex.label,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    use std::collections::HashSet;

    use crate::textproc::{Corpus, SEP_ID, UNK_ID};

    fn task_vocab() -> Vocab {
        let corpus = gen_template_corpus(50, 3).unwrap();
        Vocab::build_with_extras(&corpus, 1, &lexicon::vocab_extras())
    }

    fn balance(examples: &[Example]) -> f64 {
        examples.iter().filter(|e| e.label == 1.0).count() as f64 / examples.len() as f64
    }

    #[test]
    fn specs_pair_metrics_with_kinds() {
        for name in TaskName::all() {
            let spec = TaskSpec::of(name);
            match spec.kind {
                TaskKind::Classification => {
                    assert!(matches!(spec.metric, TaskMetric::Accuracy | TaskMetric::Matthews))
                }
                TaskKind::Regression => {
                    assert_eq!(spec.metric, TaskMetric::PearsonSpearmanMean)
                }
            }
        }
        assert_eq!("similarity".parse::<TaskName>().unwrap(), TaskName::Similarity);
        assert!("mnli".parse::<TaskName>().is_err());
    }

    #[test]
    fn undersized_splits_are_rejected() {
        let vocab = task_vocab();
        let sizes = TaskSizes { train: 199, dev: 50, test: 100 };
        assert!(matches!(
            gen_tasks(&vocab, &sizes, 5).unwrap_err(),
            TaskError::SizesTooSmall { train: 199, .. }
        ));
    }

    #[test]
    fn datasets_are_balanced_and_distinct() {
        let vocab = task_vocab();
        let tasks = gen_tasks(&vocab, &TaskSizes::default(), 5).unwrap();
        assert_eq!(tasks.len(), 3);
        for ds in &tasks {
            let mut seen = HashSet::new();
            for split in [&ds.train, &ds.dev, &ds.test] {
                for ex in split.iter() {
                    assert!(seen.insert(ex.texts.join("\t")), "duplicate in {}", ds.spec.name);
                }
                if ds.spec.kind == TaskKind::Classification {
                    let frac = balance(split);
                    assert!((0.45..=0.55).contains(&frac), "{}: {frac}", ds.spec.name);
                }
            }
            assert_eq!(ds.train.len(), 200);
            assert_eq!(ds.dev.len(), 50);
            assert_eq!(ds.test.len(), 100);
        }
    }

    #[test]
    fn no_example_encodes_to_unk() {
        let vocab = task_vocab();
        let tasks = gen_tasks(&vocab, &TaskSizes::default(), 11).unwrap();
        for ds in &tasks {
            for split in [&ds.train, &ds.dev, &ds.test] {
                for ex in split.iter() {
                    assert!(!ex.ids.contains(&UNK_ID), "UNK in {:?}", ex.texts);
                }
            }
        }
    }

    #[test]
    fn polarity_labels_follow_the_adjective_majority() {
        let vocab = task_vocab();
        let ds = gen_polarity(&vocab, &TaskSizes::default(), 9).unwrap();
        for ex in ds.train.iter().chain(&ds.dev).chain(&ds.test) {
            let words = crate::textproc::word_tokens(&ex.texts[0]).unwrap();
            let pos = words.iter().filter(|w| lexicon::POSITIVE_ADJECTIVES.contains(&w.as_str())).count();
            let neg = words.iter().filter(|w| lexicon::NEGATIVE_ADJECTIVES.contains(&w.as_str())).count();
            assert_ne!(pos, neg, "no majority in {:?}", ex.texts);
            let majority = usize::from(pos > neg);
            assert_eq!(ex.label, majority as f64);
        }
    }

    #[test]
    fn acceptability_shuffles_differ_from_every_grammatical_source() {
        let vocab = task_vocab();
        let ds = gen_acceptability(&vocab, &TaskSizes::default(), 13).unwrap();
        let sources = gen_template_corpus(366, derive(13, 1)).unwrap();
        let grammatical: HashSet<&str> =
            sources.sentences().iter().map(String::as_str).collect();
        for ex in ds.train.iter().chain(&ds.dev).chain(&ds.test) {
            let in_templates = grammatical.contains(ex.texts[0].as_str());
            if ex.label == 1.0 {
                assert!(in_templates, "{:?}", ex.texts);
            } else {
                assert!(!in_templates, "shuffle equals a template: {:?}", ex.texts);
            }
        }
    }

    #[test]
    fn similarity_labels_are_jaccard_overlap() {
        let vocab = task_vocab();
        let ds = gen_similarity(&vocab, &TaskSizes::default(), 21).unwrap();
        let mut distinct = BTreeSet::new();
        for ex in ds.train.iter().chain(&ds.dev).chain(&ds.test) {
            assert!((0.0..=1.0).contains(&ex.label));
            if ex.texts[0] == ex.texts[1] {
                assert_eq!(ex.label, 1.0);
            }
            let want = content_jaccard(&ex.texts[0], &ex.texts[1]).unwrap();
            assert_eq!(ex.label, want);
            distinct.insert(ex.label.to_bits());
        }
        // all six replacement counts occur: {1, 4/6, 3/7, 2/8, 1/9, 0}
        assert_eq!(distinct.len(), 6);
        assert!(ds.train.iter().any(|e| e.label == 1.0));
        assert!(ds.train.iter().any(|e| e.label == 0.0));
    }

    #[test]
    fn jaccard_hand_case() {
        // content words {dog, chased, cat} vs {dog, chased, bird}: 2 of 4
        let a = "the dog chased the cat .";
        let b = "the dog chased the bird .";
        assert_eq!(content_jaccard(a, b).unwrap(), 0.5);
        assert_eq!(content_jaccard(a, a).unwrap(), 1.0);
    }

    #[test]
    fn pair_encoding_has_interior_separator() {
        let vocab = task_vocab();
        let ex = encode_pair("the dog walked .", "the cat walked .", &vocab).unwrap();
        let seps = ex.ids.iter().filter(|&&id| id == SEP_ID).count();
        assert_eq!(seps, 2);
        assert_eq!(ex.ids[0], crate::textproc::CLS_ID);
        assert_eq!(*ex.ids.last().unwrap(), SEP_ID);
    }

    #[test]
    fn dialect_split_preserves_order_and_labels() {
        let vocab = task_vocab();
        let tasks = gen_tasks(&vocab, &TaskSizes::default(), 31).unwrap();
        for ds in &tasks {
            let dialect = dialect_split(&ds.test, &RuleProfile::aae(), &vocab, 77).unwrap();
            assert_eq!(dialect.len(), ds.test.len());
            let mut changed = 0;
            for (sae, dia) in ds.test.iter().zip(&dialect) {
                assert_eq!(sae.label, dia.label);
                assert_eq!(sae.texts.len(), dia.texts.len());
                if sae.ids != dia.ids {
                    changed += 1;
                }
            }
            assert!(changed > 0, "{}: no rule ever fired", ds.spec.name);
        }
    }

    #[test]
    fn dialect_split_under_the_empty_profile_is_identity() {
        let vocab = task_vocab();
        let ds = gen_polarity(&vocab, &TaskSizes::default(), 41).unwrap();
        let same = dialect_split(&ds.test, &RuleProfile::none(), &vocab, 77).unwrap();
        for (a, b) in ds.test.iter().zip(&same) {
            assert_eq!(a.ids, b.ids);
        }
    }

    #[test]
    fn absurd_sizes_hit_a_capacity_error() {
        let vocab = task_vocab();
        let sizes = TaskSizes { train: 5_000_000, dev: 50, test: 100 };
        let err = gen_tasks(&vocab, &sizes, 5).unwrap_err();
        assert!(
            matches!(err, TaskError::CapacityExceeded { .. } | TaskError::Text(_)),
            "{err}"
        );
    }

    #[test]
    fn corpus_vocab_covers_task_surfaces() {
        // the corpus-built vocabulary plus lexicon extras covers every word
        // any task template can emit, even on a tiny corpus
        let corpus = Corpus::from_sentences(
            vec!["the dog walked .".to_string()],
            crate::textproc::Provenance::Generated,
        )
        .unwrap();
        let vocab = Vocab::build_with_extras(&corpus, 1, &lexicon::vocab_extras());
        let tasks = gen_tasks(&vocab, &TaskSizes::default(), 3).unwrap();
        for ds in &tasks {
            for ex in ds.train.iter().chain(&ds.dev).chain(&ds.test) {
                assert!(!ex.ids.contains(&UNK_ID));
            }
        }
    }
}
