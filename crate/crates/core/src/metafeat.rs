//! Rule-based query categorization, query typing and volume segmentation.
//!
//! The classifiers are driven entirely by lexicon files; see `lexicons/`.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textfeat::{parse_phrase_list, PhraseSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryCategory {
    MobilePhones,
    Books,
    Electronics,
    Lifestyle,
    HomeAndFurniture,
    Unknown,
}

impl QueryCategory {
    pub const ALL: [QueryCategory; 6] = [
        QueryCategory::MobilePhones,
        QueryCategory::Books,
        QueryCategory::Electronics,
        QueryCategory::Lifestyle,
        QueryCategory::HomeAndFurniture,
        QueryCategory::Unknown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QueryCategory::MobilePhones => "MobilePhones",
            QueryCategory::Books => "Books",
            QueryCategory::Electronics => "Electronics",
            QueryCategory::Lifestyle => "Lifestyle",
            QueryCategory::HomeAndFurniture => "HomeAndFurniture",
            QueryCategory::Unknown => "Unknown",
        }
    }
}

impl FromStr for QueryCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QueryCategory::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown category {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryType {
    Product,
    FacetCategory,
    Category,
}

impl QueryType {
    pub const ALL: [QueryType; 3] = [QueryType::Product, QueryType::FacetCategory, QueryType::Category];

    pub fn name(self) -> &'static str {
        match self {
            QueryType::Product => "Product",
            QueryType::FacetCategory => "FacetCategory",
            QueryType::Category => "Category",
        }
    }
}

impl FromStr for QueryType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QueryType::ALL
            .into_iter()
            .find(|t| t.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown query type {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VolumeSegment {
    Head,
    TorsoHigh,
    TorsoBottom,
}

impl VolumeSegment {
    pub const ALL: [VolumeSegment; 3] = [
        VolumeSegment::Head,
        VolumeSegment::TorsoHigh,
        VolumeSegment::TorsoBottom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VolumeSegment::Head => "Head",
            VolumeSegment::TorsoHigh => "TorsoHigh",
            VolumeSegment::TorsoBottom => "TorsoBottom",
        }
    }
}

impl FromStr for VolumeSegment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VolumeSegment::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown volume segment {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryMeta {
    pub query_cat: QueryCategory,
    pub query_type: QueryType,
    pub volume_segment: VolumeSegment,
}

/// Phrase to category map, parsed from lines of the form `phrase => Category`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CategoryLexicon {
    entries: Vec<(Vec<String>, QueryCategory)>,
}

impl CategoryLexicon {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (phrase, category) = line
                .split_once("=>")
                .ok_or_else(|| Error::Config(format!("category lexicon line without '=>': {line:?}")))?;
            let phrase = phrase.trim();
            if phrase.is_empty() {
                return Err(Error::Config(format!("empty phrase in {line:?}")));
            }
            entries.push((phrase.to_string(), category.parse()?));
        }
        Ok(Self::from_entries(entries))
    }

    pub fn from_entries<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, QueryCategory)>,
        S: AsRef<str>,
    {
        let mut entries: Vec<(Vec<String>, QueryCategory)> = entries
            .into_iter()
            .map(|(p, c)| (p.as_ref().split_whitespace().map(str::to_lowercase).collect(), c))
            .collect();
        entries.sort();
        entries.dedup_by(|a, b| a.0 == b.0);
        CategoryLexicon { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Longest matching entry and the token span it covers. Ties go to the
    /// longer phrase in characters, then the lexicographically smaller one.
    fn best_match(&self, tokens: &[&str]) -> Option<(&(Vec<String>, QueryCategory), usize)> {
        let mut best: Option<(&(Vec<String>, QueryCategory), usize)> = None;
        for entry in &self.entries {
            let n = entry.0.len();
            if n > tokens.len() {
                continue;
            }
            let Some(start) = tokens
                .windows(n)
                .position(|w| w.iter().zip(&entry.0).all(|(t, p)| *t == p))
            else {
                continue;
            };
            let better = match best {
                None => true,
                Some((current, _)) => {
                    let key =
                        |e: &(Vec<String>, QueryCategory)| (e.0.len(), e.0.iter().map(String::len).sum::<usize>());
                    key(entry) > key(current)
                }
            };
            if better {
                best = Some((entry, start));
            }
        }
        best
    }

    pub fn phrases(&self) -> impl Iterator<Item = &[String]> {
        self.entries.iter().map(|(p, _)| p.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaLexicons {
    pub categories: CategoryLexicon,
    pub products: PhraseSet,
    pub attributes: PhraseSet,
}

const CATEGORIES: &str = include_str!("../lexicons/categories.txt");
const PRODUCTS: &str = include_str!("../lexicons/products.txt");
const ATTRIBUTES: &str = include_str!("../lexicons/attributes.txt");

impl Default for MetaLexicons {
    fn default() -> Self {
        MetaLexicons {
            categories: CategoryLexicon::parse(CATEGORIES).expect("bundled category lexicon parses"),
            products: PhraseSet::parse(PRODUCTS),
            attributes: PhraseSet::parse(ATTRIBUTES),
        }
    }
}

impl MetaLexicons {
    /// Loads `categories.txt`, `products.txt` and `attributes.txt` from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| std::fs::read_to_string(dir.join(name));
        let lex = MetaLexicons {
            categories: CategoryLexicon::parse(&read("categories.txt")?)?,
            products: PhraseSet::from_phrases(parse_phrase_list(&read("products.txt")?)),
            attributes: PhraseSet::from_phrases(parse_phrase_list(&read("attributes.txt")?)),
        };
        if lex.categories.is_empty() || lex.products.is_empty() || lex.attributes.is_empty() {
            return Err(Error::Config("meta lexicons must be non-empty".into()));
        }
        Ok(lex)
    }
}

/// Category of the longest matching lexicon phrase, `Unknown` when none match.
pub fn classify_category(query: &str, lexicon: &CategoryLexicon) -> QueryCategory {
    let tokens: Vec<&str> = query.split_whitespace().collect();
    lexicon
        .best_match(&tokens)
        .map_or(QueryCategory::Unknown, |(entry, _)| entry.1)
}

/// `Product` when a product phrase matches; `FacetCategory` when a category
/// phrase matches and an attribute phrase occurs outside it; else `Category`.
pub fn classify_query_type(
    query: &str,
    products: &PhraseSet,
    attributes: &PhraseSet,
    categories: &CategoryLexicon,
) -> QueryType {
    let tokens: Vec<&str> = query.split_whitespace().collect();
    if products.matches(&tokens) {
        return QueryType::Product;
    }
    if let Some((entry, start)) = categories.best_match(&tokens) {
        let end = start + entry.0.len();
        if attributes.matches(&tokens[..start]) || attributes.matches(&tokens[end..]) {
            return QueryType::FacetCategory;
        }
    }
    QueryType::Category
}

pub fn classify(query: &str, lexicons: &MetaLexicons) -> (QueryCategory, QueryType) {
    (
        classify_category(query, &lexicons.categories),
        classify_query_type(query, &lexicons.products, &lexicons.attributes, &lexicons.categories),
    )
}

/// Rank-orders queries by count (ties by query string) and cuts at
/// `head_pct` and `torso_pct` of the ranked list.
pub fn assign_volume_segments(
    query_counts: &BTreeMap<String, usize>,
    head_pct: f64,
    torso_pct: f64,
) -> Result<BTreeMap<String, VolumeSegment>> {
    if !(0.0 < head_pct && head_pct < torso_pct && torso_pct < 1.0) {
        return Err(Error::Config(format!(
            "segment cutoffs must satisfy 0 < head ({head_pct}) < torso ({torso_pct}) < 1"
        )));
    }
    let mut ranked: Vec<(&String, usize)> = query_counts.iter().map(|(q, c)| (q, *c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let n = ranked.len();
    let cut = |pct: f64| ((pct * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let head = cut(head_pct).max(1).min(n);
    let torso = cut(torso_pct).max(head).min(n);
    Ok(ranked
        .into_iter()
        .enumerate()
        .map(|(rank, (q, _))| {
            let segment = if rank < head {
                VolumeSegment::Head
            } else if rank < torso {
                VolumeSegment::TorsoHigh
            } else {
                VolumeSegment::TorsoBottom
            };
            (q.clone(), segment)
        })
        .collect())
}

/// Mean query count of Head queries divided by that of TorsoBottom queries.
pub fn head_to_bottom_ratio(
    query_counts: &BTreeMap<String, usize>,
    segments: &BTreeMap<String, VolumeSegment>,
) -> Option<f64> {
    let mean = |segment: VolumeSegment| {
        let counts: Vec<f64> = segments
            .iter()
            .filter(|(_, s)| **s == segment)
            .map(|(q, _)| query_counts[q] as f64)
            .collect();
        (!counts.is_empty()).then(|| counts.iter().sum::<f64>() / counts.len() as f64)
    };
    Some(mean(VolumeSegment::Head)? / mean(VolumeSegment::TorsoBottom)?)
}
