//! Closed word lists backing the template generator and the rewrite rules.
//!
//! Every verb is regular (past in "-ed"), every noun pluralizes with "-s",
//! so the rule matchers can rely on table lookups instead of a POS tagger.

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

pub struct Noun {
    pub singular: &'static str,
    pub plural: &'static str,
}

pub struct Verb {
    pub base: &'static str,
    pub third: &'static str,
    pub past: &'static str,
    pub ing: &'static str,
}

macro_rules! nouns {
    ($(($s:literal, $p:literal)),* $(,)?) => {
        &[$(Noun { singular: $s, plural: $p }),*]
    };
}

macro_rules! verbs {
    ($(($b:literal, $t:literal, $pa:literal, $i:literal)),* $(,)?) => {
        &[$(Verb { base: $b, third: $t, past: $pa, ing: $i }),*]
    };
}

pub const NOUNS: &[Noun] = nouns![
    ("dog", "dogs"),
    ("cat", "cats"),
    ("bird", "birds"),
    ("horse", "horses"),
    ("cow", "cows"),
    ("pig", "pigs"),
    ("goat", "goats"),
    ("duck", "ducks"),
    ("rabbit", "rabbits"),
    ("turtle", "turtles"),
    ("farmer", "farmers"),
    ("teacher", "teachers"),
    ("student", "students"),
    ("doctor", "doctors"),
    ("singer", "singers"),
    ("painter", "painters"),
    ("writer", "writers"),
    ("runner", "runners"),
    ("neighbor", "neighbors"),
    ("friend", "friends"),
    ("girl", "girls"),
    ("boy", "boys"),
    ("king", "kings"),
    ("queen", "queens"),
    ("clown", "clowns"),
    ("pilot", "pilots"),
    ("sailor", "sailors"),
    ("baker", "bakers"),
    ("lawyer", "lawyers"),
    ("artist", "artists"),
    ("book", "books"),
    ("chair", "chairs"),
    ("table", "tables"),
    ("garden", "gardens"),
    ("house", "houses"),
    ("window", "windows"),
    ("door", "doors"),
    ("flower", "flowers"),
    ("tree", "trees"),
    ("river", "rivers"),
    ("mountain", "mountains"),
    ("road", "roads"),
    ("song", "songs"),
    ("letter", "letters"),
];

pub const VERBS: &[Verb] = verbs![
    ("chase", "chases", "chased", "chasing"),
    ("call", "calls", "called", "calling"),
    ("clean", "cleans", "cleaned", "cleaning"),
    ("climb", "climbs", "climbed", "climbing"),
    ("cook", "cooks", "cooked", "cooking"),
    ("count", "counts", "counted", "counting"),
    ("cross", "crosses", "crossed", "crossing"),
    ("dance", "dances", "danced", "dancing"),
    ("follow", "follows", "followed", "following"),
    ("help", "helps", "helped", "helping"),
    ("hug", "hugs", "hugged", "hugging"),
    ("jump", "jumps", "jumped", "jumping"),
    ("kick", "kicks", "kicked", "kicking"),
    ("lift", "lifts", "lifted", "lifting"),
    ("love", "loves", "loved", "loving"),
    ("miss", "misses", "missed", "missing"),
    ("need", "needs", "needed", "needing"),
    ("paint", "paints", "painted", "painting"),
    ("play", "plays", "played", "playing"),
    ("pull", "pulls", "pulled", "pulling"),
    ("push", "pushes", "pushed", "pushing"),
    ("touch", "touches", "touched", "touching"),
    ("visit", "visits", "visited", "visiting"),
    ("walk", "walks", "walked", "walking"),
    ("want", "wants", "wanted", "wanting"),
    ("watch", "watches", "watched", "watching"),
];

pub const POSITIVE_ADJECTIVES: &[&str] = &[
    "happy", "kind", "brave", "calm", "clever", "cheerful", "friendly", "gentle", "glad",
    "graceful", "lively", "loyal",
];

pub const NEGATIVE_ADJECTIVES: &[&str] = &[
    "sad", "angry", "rude", "lazy", "messy", "gloomy", "grumpy", "careless", "cruel", "selfish",
    "sloppy", "bitter",
];

pub const NUMERALS: &[&str] = &[
    "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

pub const SINGULAR_PRONOUNS: &[&str] = &["she", "he", "it"];
pub const PLURAL_PRONOUNS: &[&str] = &["they", "we"];

/// Indefinite words and their negative-concord rewrites.
pub const ANY_TO_NO: &[(&str, &str)] = &[
    ("anything", "nothing"),
    ("anybody", "nobody"),
    ("anywhere", "nowhere"),
    ("any", "no"),
];

pub const NEGATORS: &[&str] = &["not", "n't", "never"];

pub fn adjectives() -> impl Iterator<Item = &'static str> {
    POSITIVE_ADJECTIVES
        .iter()
        .chain(NEGATIVE_ADJECTIVES)
        .copied()
}

fn set(words: impl Iterator<Item = &'static str>) -> BTreeSet<&'static str> {
    words.collect()
}

pub fn is_adjective(w: &str) -> bool {
    static S: OnceLock<BTreeSet<&str>> = OnceLock::new();
    S.get_or_init(|| set(adjectives())).contains(w)
}

pub fn is_numeral(w: &str) -> bool {
    NUMERALS.contains(&w)
}

pub fn is_ing_form(w: &str) -> bool {
    static S: OnceLock<BTreeSet<&str>> = OnceLock::new();
    S.get_or_init(|| set(VERBS.iter().map(|v| v.ing))).contains(w)
}

pub fn is_base_form(w: &str) -> bool {
    static S: OnceLock<BTreeSet<&str>> = OnceLock::new();
    S.get_or_init(|| set(VERBS.iter().map(|v| v.base))).contains(w)
}

pub fn is_past_form(w: &str) -> bool {
    past_to_base(w).is_some()
}

pub fn past_to_base(w: &str) -> Option<&'static str> {
    static M: OnceLock<HashMap<&str, &str>> = OnceLock::new();
    M.get_or_init(|| VERBS.iter().map(|v| (v.past, v.base)).collect())
        .get(w)
        .copied()
}

pub fn plural_to_singular(w: &str) -> Option<&'static str> {
    static M: OnceLock<HashMap<&str, &str>> = OnceLock::new();
    M.get_or_init(|| NOUNS.iter().map(|n| (n.plural, n.singular)).collect())
        .get(w)
        .copied()
}

pub fn any_rewrite(w: &str) -> Option<&'static str> {
    ANY_TO_NO.iter().find(|(a, _)| *a == w).map(|(_, n)| *n)
}

/// Words that can head a copula clause: pronouns plus any lexicon noun form.
pub fn is_subject_word(w: &str) -> bool {
    static S: OnceLock<BTreeSet<&str>> = OnceLock::new();
    S.get_or_init(|| {
        set(SINGULAR_PRONOUNS
            .iter()
            .chain(PLURAL_PRONOUNS)
            .copied()
            .chain(NOUNS.iter().map(|n| n.singular))
            .chain(NOUNS.iter().map(|n| n.plural)))
    })
    .contains(w)
}

pub fn is_negator(w: &str) -> bool {
    NEGATORS.contains(&w)
}

/// Every surface form the template generator can emit.
pub fn template_surface_words() -> BTreeSet<&'static str> {
    let mut words = BTreeSet::new();
    for n in NOUNS {
        words.insert(n.singular);
        words.insert(n.plural);
    }
    for v in VERBS {
        words.insert(v.base);
        words.insert(v.third);
        words.insert(v.past);
        words.insert(v.ing);
    }
    words.extend(adjectives());
    words.extend(NUMERALS.iter().copied());
    words.extend(SINGULAR_PRONOUNS.iter().copied());
    words.extend(PLURAL_PRONOUNS.iter().copied());
    words.extend([
        "the", "is", "are", "does", "do", "not", "n't", "never", "and", "anything", "anybody",
        "any", ".", "?",
    ]);
    words
}

/// Words only the dialect rewrites can introduce.
pub fn dialect_emitted_words() -> &'static [&'static str] {
    &["nothing", "nobody", "nowhere", "no", "done"]
}

/// Full closed vocabulary for pipelines that encode rule-rewritten text.
pub fn vocab_extras() -> Vec<&'static str> {
    let mut words = template_surface_words();
    words.extend(dialect_emitted_words());
    words.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicon_sizes_meet_minimums() {
        assert!(NOUNS.len() >= 40, "{} nouns", NOUNS.len());
        assert!(VERBS.len() >= 25, "{} verbs", VERBS.len());
        assert!(adjectives().count() >= 20);
    }

    #[test]
    fn verbs_are_regular() {
        for v in VERBS {
            assert!(v.past.ends_with("ed"), "{}", v.past);
            assert!(v.ing.ends_with("ing"), "{}", v.ing);
            assert!(v.third.ends_with('s'), "{}", v.third);
        }
    }

    #[test]
    fn nouns_pluralize_with_s() {
        for n in NOUNS {
            assert!(n.plural.ends_with('s'), "{}", n.plural);
            assert_eq!(plural_to_singular(n.plural), Some(n.singular));
        }
    }

    #[test]
    fn no_duplicate_surface_forms_within_type() {
        let sing: BTreeSet<_> = NOUNS.iter().map(|n| n.singular).collect();
        assert_eq!(sing.len(), NOUNS.len());
        let past: BTreeSet<_> = VERBS.iter().map(|v| v.past).collect();
        assert_eq!(past.len(), VERBS.len());
        let adj: BTreeSet<_> = adjectives().collect();
        assert_eq!(adj.len(), POSITIVE_ADJECTIVES.len() + NEGATIVE_ADJECTIVES.len());
    }

    #[test]
    fn lookups_agree_with_tables() {
        assert!(is_past_form("chased"));
        assert_eq!(past_to_base("chased"), Some("chase"));
        assert!(!is_past_form("chase"));
        assert!(is_subject_word("she"));
        assert!(is_subject_word("dogs"));
        assert!(!is_subject_word("happy"));
        assert_eq!(any_rewrite("anything"), Some("nothing"));
        assert_eq!(any_rewrite("nothing"), None);
    }
}
