use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

const FORMAT_VERSION: u32 = 1;

/// Add-k smoothed n-gram model over whitespace tokens.
///
/// `P(w | h) = (c(h, w) + k) / (c(h) + k * |V|)` where `V` is the training
/// vocabulary plus the end marker and the unknown token, and `h` is the
/// previous `order - 1` tokens padded with start markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LmFile", into = "LmFile")]
pub struct NgramLanguageModel {
    order: usize,
    smoothing_k: f64,
    vocabulary: BTreeSet<String>,
    counts: BTreeMap<String, u64>,
    context_counts: HashMap<String, u64>,
}

#[derive(Serialize, Deserialize)]
struct LmFile {
    format_version: u32,
    order: usize,
    smoothing_k: f64,
    vocabulary: BTreeSet<String>,
    counts: BTreeMap<String, u64>,
}

impl From<NgramLanguageModel> for LmFile {
    fn from(lm: NgramLanguageModel) -> Self {
        LmFile {
            format_version: FORMAT_VERSION,
            order: lm.order,
            smoothing_k: lm.smoothing_k,
            vocabulary: lm.vocabulary,
            counts: lm.counts,
        }
    }
}

impl TryFrom<LmFile> for NgramLanguageModel {
    type Error = Error;

    fn try_from(file: LmFile) -> Result<Self> {
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Artifact(format!(
                "language model version {} (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        check_params(file.order, file.smoothing_k)?;
        let mut lm = NgramLanguageModel {
            order: file.order,
            smoothing_k: file.smoothing_k,
            vocabulary: file.vocabulary,
            counts: file.counts,
            context_counts: HashMap::new(),
        };
        lm.rebuild_contexts();
        Ok(lm)
    }
}

fn check_params(order: usize, smoothing_k: f64) -> Result<()> {
    if order == 0 {
        return Err(Error::Config("language model order must be >= 1".into()));
    }
    if !(smoothing_k > 0.0 && smoothing_k.is_finite()) {
        return Err(Error::Config(format!("smoothing k must be > 0, got {smoothing_k}")));
    }
    Ok(())
}

impl NgramLanguageModel {
    pub fn train<'a, I>(queries: I, order: usize, smoothing_k: f64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        Self::train_weighted(queries.into_iter().map(|q| (q, 1)), order, smoothing_k)
    }

    /// Trains on `(query, multiplicity)` pairs; equivalent to repeating each
    /// query `multiplicity` times.
    pub fn train_weighted<'a, I>(queries: I, order: usize, smoothing_k: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, u64)>,
    {
        check_params(order, smoothing_k)?;
        let mut lm = NgramLanguageModel {
            order,
            smoothing_k,
            vocabulary: BTreeSet::new(),
            counts: BTreeMap::new(),
            context_counts: HashMap::new(),
        };
        let mut sentences = 0u64;
        for (query, weight) in queries {
            if weight == 0 {
                continue;
            }
            let tokens: Vec<&str> = query.split_whitespace().collect();
            if tokens.is_empty() {
                continue;
            }
            sentences += weight;
            lm.vocabulary.extend(tokens.iter().map(|t| t.to_string()));
            for gram in lm.padded_ngrams(&tokens) {
                *lm.counts.entry(gram).or_insert(0) += weight;
            }
        }
        if sentences == 0 {
            return Err(Error::EmptyCorpus);
        }
        lm.rebuild_contexts();
        Ok(lm)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing_k(&self) -> f64 {
        self.smoothing_k
    }

    pub fn vocabulary(&self) -> &BTreeSet<String> {
        &self.vocabulary
    }

    /// Size of the prediction space: vocabulary, end marker, unknown token.
    pub fn target_space(&self) -> usize {
        self.vocabulary.len() + 2
    }

    fn padded_ngrams(&self, tokens: &[&str]) -> Vec<String> {
        let mut padded: Vec<&str> = vec![BOS; self.order - 1];
        padded.extend(
            tokens
                .iter()
                .map(|t| if self.vocabulary.contains(*t) { *t } else { UNK }),
        );
        padded.push(EOS);
        padded.windows(self.order).map(|w| w.join(" ")).collect()
    }

    fn rebuild_contexts(&mut self) {
        self.context_counts.clear();
        for (gram, count) in &self.counts {
            let context = match gram.rsplit_once(' ') {
                Some((context, _)) => context.to_string(),
                None => String::new(),
            };
            *self.context_counts.entry(context).or_insert(0) += count;
        }
    }

    fn map_token<'a>(&self, token: &'a str) -> &'a str {
        if token == EOS || self.vocabulary.contains(token) {
            token
        } else {
            UNK
        }
    }

    /// Conditional probability of `token` after `context` (the last
    /// `order - 1` entries are used; shorter contexts are padded with `<s>`).
    pub fn prob(&self, context: &[&str], token: &str) -> f64 {
        let need = self.order - 1;
        let mut ctx: Vec<&str> = Vec::with_capacity(need);
        let have = context.len().min(need);
        ctx.extend(std::iter::repeat_n(BOS, need - have));
        ctx.extend(
            context[context.len() - have..]
                .iter()
                .map(|t| if *t == BOS { BOS } else { self.map_token(t) }),
        );
        let ctx = ctx.join(" ");
        let target = self.map_token(token);
        let gram = if ctx.is_empty() {
            target.to_string()
        } else {
            format!("{ctx} {target}")
        };
        let joint = self.counts.get(&gram).copied().unwrap_or(0) as f64;
        let marginal = self.context_counts.get(&ctx).copied().unwrap_or(0) as f64;
        (joint + self.smoothing_k) / (marginal + self.smoothing_k * self.target_space() as f64)
    }

    /// `exp(-(1/T) * sum(log P(token | context)))` over the query tokens and
    /// the end marker.
    pub fn perplexity(&self, query: &str) -> f64 {
        let mut tokens: Vec<&str> = query.split_whitespace().collect();
        tokens.push(EOS);
        let mut log_sum = 0.0;
        for i in 0..tokens.len() {
            log_sum += self.prob(&tokens[..i], tokens[i]).ln();
        }
        (-log_sum / tokens.len() as f64).exp().max(1.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("language model serializes")
    }
}
