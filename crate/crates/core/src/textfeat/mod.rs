//! Query-text features: lengths, language-model perplexity, similarity to the
//! following query in a session, and lexicon phrase flags.

mod lm;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lm::{NgramLanguageModel, BOS, EOS, UNK};

/// Parses a phrase-list file: one phrase per line, `#` starts a comment line.
/// Phrases are normalized; blank lines are skipped.
pub fn parse_phrase_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
        .filter_map(|line| crate::event_log::normalize_query(line).ok())
        .collect()
}

/// Phrases stored as token sequences.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PhraseSet(Vec<Vec<String>>);

impl PhraseSet {
    pub fn from_phrases<I, S>(phrases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set: Vec<Vec<String>> = phrases
            .into_iter()
            .map(|p| p.as_ref().split_whitespace().map(str::to_lowercase).collect::<Vec<_>>())
            .filter(|p| !p.is_empty())
            .collect();
        set.sort();
        set.dedup();
        PhraseSet(set)
    }

    pub fn parse(text: &str) -> Self {
        Self::from_phrases(parse_phrase_list(text))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// True when some phrase occurs as a contiguous run of whole tokens.
    pub fn matches(&self, tokens: &[&str]) -> bool {
        self.longest_match(tokens).is_some()
    }

    /// The longest phrase (in tokens) found in `tokens`.
    pub fn longest_match(&self, tokens: &[&str]) -> Option<&[String]> {
        self.0
            .iter()
            .filter(|phrase| contains_run(tokens, phrase))
            .max_by_key(|phrase| phrase.len())
            .map(Vec::as_slice)
    }
}

pub(crate) fn contains_run(tokens: &[&str], phrase: &[String]) -> bool {
    phrase.len() <= tokens.len()
        && tokens
            .windows(phrase.len())
            .any(|w| w.iter().zip(phrase).all(|(t, p)| *t == p))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicons {
    pub specifiers: PhraseSet,
    pub modifiers: PhraseSet,
    pub range_specifiers: PhraseSet,
    pub units: PhraseSet,
}

const SPECIFIERS: &str = include_str!("../../lexicons/specifiers.txt");
const MODIFIERS: &str = include_str!("../../lexicons/modifiers.txt");
const RANGE_SPECIFIERS: &str = include_str!("../../lexicons/range_specifiers.txt");
const UNITS: &str = include_str!("../../lexicons/units.txt");

impl Default for Lexicons {
    fn default() -> Self {
        Lexicons {
            specifiers: PhraseSet::parse(SPECIFIERS),
            modifiers: PhraseSet::parse(MODIFIERS),
            range_specifiers: PhraseSet::parse(RANGE_SPECIFIERS),
            units: PhraseSet::parse(UNITS),
        }
    }
}

impl Lexicons {
    /// Loads `specifiers.txt`, `modifiers.txt`, `range_specifiers.txt` and
    /// `units.txt` from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<PhraseSet> {
            let set = PhraseSet::parse(&std::fs::read_to_string(dir.join(name))?);
            if set.is_empty() {
                return Err(Error::Config(format!("lexicon {name} is empty")));
            }
            Ok(set)
        };
        Ok(Lexicons {
            specifiers: read("specifiers.txt")?,
            modifiers: read("modifiers.txt")?,
            range_specifiers: read("range_specifiers.txt")?,
            units: read("units.txt")?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LexiconFlags {
    pub contains_sp: bool,
    pub contains_mt: bool,
    pub contains_rs: bool,
    pub contains_units: bool,
}

pub fn detect_lexicon_flags(query: &str, lexicons: &Lexicons) -> LexiconFlags {
    let tokens: Vec<&str> = query.split_whitespace().collect();
    LexiconFlags {
        contains_sp: lexicons.specifiers.matches(&tokens),
        contains_mt: lexicons.modifiers.matches(&tokens),
        contains_rs: lexicons.range_specifiers.matches(&tokens),
        contains_units: lexicons.units.matches(&tokens),
    }
}

/// Pluggable query-to-query similarity. Implementations must be symmetric
/// and bounded to [0, 1].
pub trait QuerySimilarity: Sync {
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// Jaccard overlap of the word sets.
#[derive(Debug, Clone, Copy, Default)]
pub struct JaccardSimilarity;

impl QuerySimilarity for JaccardSimilarity {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        query_similarity(a, b)
    }
}

pub fn query_similarity(a: &str, b: &str) -> f64 {
    let a: BTreeSet<&str> = a.split_whitespace().collect();
    let b: BTreeSet<&str> = b.split_whitespace().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// One query issuance seen from the session's point of view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionEntry {
    pub session_id: String,
    pub start_ms: i64,
    pub query_instance_id: String,
    pub normalized_query: String,
}

/// Mean similarity of each query to the query that followed it in the same
/// session, over all sessions. Queries never followed are absent.
pub fn per_query_query_sim(entries: &[SessionEntry]) -> BTreeMap<String, f64> {
    per_query_query_sim_with(entries, &JaccardSimilarity)
}

pub fn per_query_query_sim_with(entries: &[SessionEntry], measure: &dyn QuerySimilarity) -> BTreeMap<String, f64> {
    let mut order: Vec<&SessionEntry> = entries.iter().collect();
    order.sort_by(|a, b| {
        (&a.session_id, a.start_ms, &a.query_instance_id).cmp(&(&b.session_id, b.start_ms, &b.query_instance_id))
    });
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for pair in order.windows(2) {
        let (cur, next) = (pair[0], pair[1]);
        if cur.session_id != next.session_id {
            continue;
        }
        let sim = measure.similarity(&cur.normalized_query, &next.normalized_query);
        let slot = sums.entry(cur.normalized_query.as_str()).or_insert((0.0, 0));
        slot.0 += sim;
        slot.1 += 1;
    }
    sums.into_iter()
        .map(|(q, (sum, n))| (q.to_string(), sum / n as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextFeatures {
    pub char_query_len: usize,
    pub word_query_len: usize,
    pub lm_score: f64,
    pub query_sim: Option<f64>,
    pub flags: LexiconFlags,
}

/// Text features of a normalized query.
pub fn text_features(
    query: &str,
    lm: &NgramLanguageModel,
    lexicons: &Lexicons,
    query_sim: Option<f64>,
) -> TextFeatures {
    TextFeatures {
        char_query_len: query.chars().count(),
        word_query_len: query.split_whitespace().count(),
        lm_score: lm.perplexity(query),
        query_sim,
        flags: detect_lexicon_flags(query, lexicons),
    }
}
