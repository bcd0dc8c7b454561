//! Synthetic labeled query logs. Each query gets a latent rating; every
//! behavioral signal of its instances is drawn from a distribution whose
//! parameters increase with a noisy quality score derived from that rating.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::{
    write_events, write_labels, EventType, ExpertLabel, InteractionEvent, NetworkType, QueryInstance,
};
use crate::metafeat::{assign_volume_segments, classify, head_to_bottom_ratio, MetaLexicons, QueryCategory, QueryType};
use crate::metrics::QueryInstanceMetrics;

/// Rating mass for 1..5. DSAT (1-3) carries 6,949 / 18,613 of the mass.
pub const DEFAULT_PRIOR: [f64; 5] = [0.08, 0.11, 0.183_339, 0.35, 0.276_661];

/// Rating-to-behavior links. Each parameter is an affine function of the
/// quality score `x`, which is `(rating - 1) / 4` plus query-level noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkParams {
    /// Logit of the click probability: `click_logit_base + click_logit_slope * x`.
    pub click_logit_base: f64,
    pub click_logit_slope: f64,
    /// Extra clicks after the first: Poisson(`base + slope * x`).
    pub extra_clicks_base: f64,
    pub extra_clicks_slope: f64,
    /// Median time to first click (ms).
    pub ttfc_median_base_ms: f64,
    pub ttfc_median_slope_ms: f64,
    pub ttfc_log_sigma: f64,
    /// First-click position: 1 + Poisson(`base + slope * x`).
    pub position_base: f64,
    pub position_slope: f64,
    pub impressions_base: f64,
    pub impressions_slope: f64,
    pub swipes_base: f64,
    pub swipes_slope: f64,
    pub filters_base: f64,
    pub filters_slope: f64,
    pub sorts_base: f64,
    pub sorts_slope: f64,
    /// Logit of a cart add given a click.
    pub cart_logit_base: f64,
    pub cart_logit_slope: f64,
    pub auto_suggest_base: f64,
    pub auto_suggest_slope: f64,
    pub good_network_rate: f64,
    pub exit_rate: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            click_logit_base: -1.2,
            click_logit_slope: 2.6,
            extra_clicks_base: 0.4,
            extra_clicks_slope: 2.0,
            ttfc_median_base_ms: 4000.0,
            ttfc_median_slope_ms: 8000.0,
            ttfc_log_sigma: 0.5,
            position_base: 1.0,
            position_slope: 4.0,
            impressions_base: 4.0,
            impressions_slope: 6.0,
            swipes_base: 0.3,
            swipes_slope: 1.7,
            filters_base: 0.1,
            filters_slope: 0.5,
            sorts_base: 0.05,
            sorts_slope: 0.3,
            cart_logit_base: -2.0,
            cart_logit_slope: 2.5,
            auto_suggest_base: 0.25,
            auto_suggest_slope: 0.2,
            good_network_rate: 0.7,
            exit_rate: 0.85,
        }
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Poisson means are floored here so extreme quality noise stays valid.
fn rate(base: f64, slope: f64, x: f64) -> f64 {
    (base + slope * x).max(0.01)
}

impl LinkParams {
    fn validate(&self) -> Result<()> {
        let slopes = [
            ("click_logit_slope", self.click_logit_slope),
            ("extra_clicks_slope", self.extra_clicks_slope),
            ("ttfc_median_slope_ms", self.ttfc_median_slope_ms),
            ("position_slope", self.position_slope),
            ("impressions_slope", self.impressions_slope),
            ("swipes_slope", self.swipes_slope),
            ("filters_slope", self.filters_slope),
            ("sorts_slope", self.sorts_slope),
            ("cart_logit_slope", self.cart_logit_slope),
        ];
        if let Some((name, v)) = slopes.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::Config(format!(
                "{name} = {v}; trend links must increase with rating"
            )));
        }
        let probabilities = [
            ("good_network_rate", self.good_network_rate),
            ("exit_rate", self.exit_rate),
            ("auto_suggest_base", self.auto_suggest_base),
            (
                "auto_suggest_base + auto_suggest_slope",
                self.auto_suggest_base + self.auto_suggest_slope,
            ),
        ];
        if let Some((name, v)) = probabilities.iter().find(|(_, v)| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config(format!("{name} = {v} is not a probability")));
        }
        if !(self.ttfc_median_base_ms > 0.0 && self.ttfc_log_sigma >= 0.0) {
            return Err(Error::Config("time-to-first-click parameters must be positive".into()));
        }
        Ok(())
    }

    /// Click probability of a noise-free query of this rating.
    pub fn click_probability(&self, rating: u8) -> f64 {
        logistic(self.click_logit_base + self.click_logit_slope * quality(rating))
    }

    /// Expected clicks per instance of a noise-free query of this rating.
    pub fn expected_clicks(&self, rating: u8) -> f64 {
        let x = quality(rating);
        self.click_probability(rating) * (1.0 + rate(self.extra_clicks_base, self.extra_clicks_slope, x))
    }

    /// Median time to first click of a noise-free query of this rating.
    pub fn ttfc_median_ms(&self, rating: u8) -> f64 {
        self.ttfc_median_base_ms + self.ttfc_median_slope_ms * quality(rating)
    }
}

/// Noise-free quality score of a rating, in [0, 1].
pub fn quality(rating: u8) -> f64 {
    (f64::from(rating) - 1.0) / 4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_queries: usize,
    pub zipf_exponent: f64,
    /// Floor on instances per query, so every query clears the volume filter.
    pub min_instances: usize,
    /// Rank offset `b` of the Zipf-Mandelbrot volume curve; flattens the very head.
    pub zipf_offset: f64,
    /// Instances added to the query of rank `r`: `floor(instance_scale * (r + b)^-s)`.
    pub instance_scale: f64,
    pub rating_prior: [f64; 5],
    /// Std of the query-level quality noise before slice scaling.
    pub quality_noise: f64,
    /// Std of a per-query click-logit offset unrelated to rating.
    pub ctr_nuisance: f64,
    /// Probability that an instance behaves like a uniformly random quality.
    pub instance_noise: f64,
    /// Follow-up query probability at quality 0; it falls linearly to 0 at 1.
    pub reformulation_rate: f64,
    /// Quality-noise multipliers; missing entries mean 1.
    pub category_noise: BTreeMap<QueryCategory, f64>,
    pub type_noise: BTreeMap<QueryType, f64>,
    /// Share of queries drawn from the Unknown-category template.
    pub unknown_share: f64,
    pub links: LinkParams,
    /// Start of the simulated week (ms since epoch).
    pub start_ms: i64,
    pub head_pct: f64,
    pub torso_pct: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 20180701,
            n_queries: 5000,
            zipf_exponent: 1.1,
            min_instances: 101,
            zipf_offset: 10.0,
            instance_scale: 400_000.0,
            rating_prior: DEFAULT_PRIOR,
            quality_noise: 0.15,
            ctr_nuisance: 1.5,
            instance_noise: 0.1,
            reformulation_rate: 0.3,
            category_noise: BTreeMap::from([(QueryCategory::MobilePhones, 0.5), (QueryCategory::Unknown, 1.4)]),
            type_noise: BTreeMap::from([(QueryType::Product, 0.6)]),
            unknown_share: 0.08,
            links: LinkParams::default(),
            start_ms: 1_530_403_200_000,
            head_pct: 0.05,
            torso_pct: 0.5,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_queries == 0 {
            return bad("n_queries must be positive".into());
        }
        if self.min_instances == 0 {
            return bad("min_instances must be positive".into());
        }
        if !(self.zipf_exponent > 0.0) || !(self.instance_scale >= 0.0) || !(self.zipf_offset >= 0.0) {
            return bad("zipf_exponent must be positive; instance_scale and zipf_offset non-negative".into());
        }
        if self.rating_prior.iter().any(|p| !(*p >= 0.0)) || (self.rating_prior.iter().sum::<f64>() - 1.0).abs() > 1e-6
        {
            return bad(format!(
                "rating prior {:?} must be non-negative and sum to 1",
                self.rating_prior
            ));
        }
        for (name, v) in [
            ("quality_noise", self.quality_noise),
            ("ctr_nuisance", self.ctr_nuisance),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        for (name, v) in [
            ("instance_noise", self.instance_noise),
            ("reformulation_rate", self.reformulation_rate),
            ("unknown_share", self.unknown_share),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} must lie in [0, 1]"));
            }
        }
        let multipliers = self.category_noise.values().chain(self.type_noise.values());
        if multipliers.clone().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return bad("noise multipliers must be finite and non-negative".into());
        }
        if self.start_ms <= 0 {
            return bad("start_ms must be positive".into());
        }
        if !(0.0 < self.head_pct && self.head_pct < self.torso_pct && self.torso_pct < 1.0) {
            return bad("segment cutoffs must satisfy 0 < head_pct < torso_pct < 1".into());
        }
        self.links.validate()
    }

    fn noise_scale(&self, category: QueryCategory, query_type: QueryType) -> f64 {
        self.category_noise.get(&category).copied().unwrap_or(1.0)
            * self.type_noise.get(&query_type).copied().unwrap_or(1.0)
    }

    /// Planned instances of the query at 1-based Zipf rank `rank`.
    pub fn planned_instances(&self, rank: usize) -> usize {
        self.min_instances
            + (self.instance_scale * (rank as f64 + self.zipf_offset).powf(-self.zipf_exponent)).floor() as usize
    }
}

/// RNG for item `index` within an independent `domain` of the seed.
fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

const DOMAIN_QUERIES: u64 = 1;
const DOMAIN_PARAMS: u64 = 2;
const DOMAIN_INSTANCES: u64 = 3;

struct CategoryVocab {
    nouns: &'static [&'static str],
    products: &'static [&'static str],
    attributes: &'static [&'static str],
    units: &'static [&'static str],
    price_step: u32,
}

const VOCAB: [CategoryVocab; 5] = [
    CategoryVocab {
        nouns: &[
            "mobile",
            "mobiles",
            "smartphone",
            "phone",
            "phones",
            "mobile cover",
            "power bank",
            "earphones",
            "screen guard",
            "charger",
        ],
        products: &[
            "iphone x",
            "iphone 8",
            "iphone 7",
            "galaxy s9",
            "galaxy s8",
            "galaxy j7",
            "redmi note 5",
            "redmi 5a",
            "mi a1",
            "oneplus 6",
            "oneplus 5t",
            "moto g6",
            "nokia 6",
            "honor 9 lite",
            "vivo v9",
            "oppo f7",
            "pixel 2",
            "realme 1",
        ],
        attributes: &[
            "samsung", "apple", "xiaomi", "motorola", "vivo", "oppo", "nokia", "honor", "dual sim", "4g", "android",
            "black", "gold", "blue",
        ],
        units: &["gb", "mah", "mp"],
        price_step: 500,
    },
    CategoryVocab {
        nouns: &[
            "books",
            "novels",
            "novel",
            "textbook",
            "comics",
            "notebook",
            "diary",
            "story books",
        ],
        products: &[
            "harry potter",
            "the alchemist",
            "wings of fire",
            "half girlfriend",
            "rich dad poor dad",
            "the secret",
            "think and grow rich",
            "ikigai",
            "sapiens",
            "the monk who sold his ferrari",
        ],
        attributes: &[
            "english",
            "hindi",
            "fiction",
            "kids",
            "ncert",
            "paperback",
            "hardcover",
            "competitive exam",
            "engineering",
            "children",
        ],
        units: &[],
        price_step: 50,
    },
    CategoryVocab {
        nouns: &[
            "laptop",
            "laptops",
            "headphones",
            "speaker",
            "camera",
            "television",
            "tv",
            "led tv",
            "pendrive",
            "hard disk",
            "smart watch",
            "printer",
            "refrigerator",
            "washing machine",
            "air conditioner",
        ],
        products: &[
            "macbook air",
            "kindle paperwhite",
            "jbl flip 4",
            "boat rockerz 255",
            "canon 1300d",
            "mi band 2",
            "fire tv stick",
            "bose qc35",
            "hp 15 laptop",
            "sandisk ultra",
        ],
        attributes: &[
            "sony",
            "lg",
            "hp",
            "dell",
            "lenovo",
            "boat",
            "jbl",
            "bluetooth",
            "wireless",
            "32 inch",
            "1.5 ton",
            "front load",
            "samsung",
            "black",
            "white",
        ],
        units: &["gb", "tb", "inch", "watt"],
        price_step: 1000,
    },
    CategoryVocab {
        nouns: &[
            "shoes",
            "sneakers",
            "t shirt",
            "shirts",
            "jeans",
            "saree",
            "kurti",
            "sling bags",
            "handbag",
            "watch",
            "sunglasses",
            "backpack",
            "jacket",
            "dress",
        ],
        products: &[
            "nike air max",
            "adidas ultraboost",
            "puma smash",
            "ray ban aviator",
            "fossil gen 3",
            "casio g shock",
            "levis 511",
            "woodland boots",
        ],
        attributes: &[
            "red",
            "black",
            "white",
            "blue",
            "brown",
            "grey",
            "nike",
            "adidas",
            "puma",
            "men",
            "women",
            "cotton",
            "leather",
            "running",
            "casual",
            "party wear",
            "formal",
        ],
        units: &[],
        price_step: 100,
    },
    CategoryVocab {
        nouns: &[
            "sofa",
            "bed",
            "dining table",
            "mattress",
            "curtains",
            "bedsheet",
            "pressure cooker",
            "mixer grinder",
            "water bottle",
            "wall clock",
            "bookshelf",
            "office chair",
            "study table",
        ],
        products: &[
            "ikea poang",
            "prestige iris mixer",
            "milton thermosteel",
            "pigeon induction",
            "godrej interio slimline",
        ],
        attributes: &[
            "wooden",
            "steel",
            "king size",
            "queen size",
            "3 seater",
            "double",
            "single",
            "non stick",
            "prestige",
            "sleepwell",
            "brown",
            "white",
        ],
        units: &["litre", "kg", "liters"],
        price_step: 500,
    },
];

const MODIFIERS: [&str; 8] = [
    "best",
    "cheapest",
    "latest",
    "top rated",
    "budget",
    "premium",
    "least expensive",
    "lowest price",
];
const PRICE_WORDS: [&str; 5] = ["under", "below", "above", "upto", "within"];
const SPECIFIERS: [&str; 4] = ["greater than", "less than", "more than", "at least"];
const SYLLABLES: [&str; 16] = [
    "zor", "vex", "kal", "bri", "tuq", "mon", "dra", "pex", "lun", "qua", "fiz", "rok", "sav", "yel", "nim", "ost",
];

fn price(rng: &mut ChaCha8Rng, step: u32) -> u32 {
    step * rng.random_range(1..=200)
}

/// A tail made only of specifier, range and unit words; it never adds an
/// attribute, so it keeps the query type unchanged.
fn plain_tail(rng: &mut ChaCha8Rng, vocab: &CategoryVocab) -> String {
    match rng.random_range(0..4) {
        0 => format!("{} {}", PRICE_WORDS.choose(rng).unwrap(), price(rng, vocab.price_step)),
        1 => {
            let lo = price(rng, vocab.price_step);
            format!("between {lo} and {}", lo + price(rng, vocab.price_step))
        }
        2 if !vocab.units.is_empty() => format!(
            "{} {} {}",
            SPECIFIERS.choose(rng).unwrap(),
            rng.random_range(2..=128),
            vocab.units.choose(rng).unwrap()
        ),
        _ => format!("{} {}", PRICE_WORDS.choose(rng).unwrap(), price(rng, vocab.price_step)),
    }
}

fn template_query(rng: &mut ChaCha8Rng, unknown_share: f64) -> String {
    if rng.random_bool(unknown_share) {
        let words = rng.random_range(1..=3);
        return (0..words)
            .map(|_| {
                let n = rng.random_range(2..=3);
                (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect::<String>()
            })
            .collect::<Vec<_>>()
            .join(" ");
    }
    let vocab = VOCAB.choose(rng).unwrap();
    let noun = *vocab.nouns.choose(rng).unwrap();
    match rng.random_range(0..20) {
        // Product queries.
        0..=4 => {
            let product = *vocab.products.choose(rng).unwrap();
            match rng.random_range(0..3) {
                0 => product.to_string(),
                1 => format!("{product} {}", vocab.attributes.choose(rng).unwrap()),
                _ => format!("{product} {}", plain_tail(rng, vocab)),
            }
        }
        // Facet queries: attribute plus a category noun.
        5..=12 => {
            let attribute = *vocab.attributes.choose(rng).unwrap();
            match rng.random_range(0..3) {
                0 => format!("{attribute} {noun}"),
                1 => format!("{attribute} {noun} {}", plain_tail(rng, vocab)),
                _ => format!("{} {attribute} {noun}", MODIFIERS.choose(rng).unwrap()),
            }
        }
        // Category queries.
        _ => match rng.random_range(0..3) {
            0 => format!("{} {noun}", MODIFIERS.choose(rng).unwrap()),
            1 => format!("{noun} {}", plain_tail(rng, vocab)),
            _ => format!("{} {noun} {}", MODIFIERS.choose(rng).unwrap(), plain_tail(rng, vocab)),
        },
    }
}

/// Everything fixed about one synthetic query before its instances are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedQuery {
    pub query: String,
    pub rank: usize,
    pub rating: u8,
    pub category: QueryCategory,
    pub query_type: QueryType,
    pub planned_instances: usize,
    /// Quality score driving behavior: `quality(rating)` plus noise.
    pub quality: f64,
    pub ctr_offset: f64,
}

/// Ratings by quota: each rating gets its largest-remainder share of `n`.
fn rating_quota(prior: &[f64; 5], n: usize) -> Vec<u8> {
    let raw: Vec<f64> = prior.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|a, b| {
        (raw[*b] - raw[*b].floor())
            .total_cmp(&(raw[*a] - raw[*a].floor()))
            .then(a.cmp(b))
    });
    let missing = n - counts.iter().sum::<usize>();
    for i in order.into_iter().take(missing) {
        counts[i] += 1;
    }
    counts
        .iter()
        .enumerate()
        .flat_map(|(i, c)| std::iter::repeat_n((i + 1) as u8, *c))
        .collect()
}

/// The deterministic plan of a corpus: query strings, ratings and volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusPlan {
    pub config: GeneratorConfig,
    pub queries: Vec<PlannedQuery>,
    /// Per category: query indices and cumulative planned counts, used to
    /// pick reformulation targets.
    follow_ups: BTreeMap<QueryCategory, (Vec<usize>, Vec<usize>)>,
}

pub fn plan(config: &GeneratorConfig) -> Result<CorpusPlan> {
    config.validate()?;
    let lexicons = MetaLexicons::default();
    let mut rng = stream_rng(config.seed, DOMAIN_QUERIES, 0);
    let mut seen = HashSet::new();
    let mut strings = Vec::with_capacity(config.n_queries);
    let mut attempts = 0usize;
    while strings.len() < config.n_queries {
        attempts += 1;
        if attempts > config.n_queries * 50 + 1000 {
            return Err(Error::Config(format!(
                "could not draw {} distinct queries from the templates",
                config.n_queries
            )));
        }
        let query = template_query(&mut rng, config.unknown_share);
        if seen.insert(query.clone()) {
            strings.push(query);
        }
    }
    let mut ratings = rating_quota(&config.rating_prior, config.n_queries);
    ratings.shuffle(&mut rng);

    let queries: Vec<PlannedQuery> = strings
        .into_iter()
        .zip(ratings)
        .enumerate()
        .map(|(i, (query, rating))| {
            let mut prng = stream_rng(config.seed, DOMAIN_PARAMS, i as u64);
            let (category, query_type) = classify(&query, &lexicons);
            let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(&mut prng);
            let nuisance: f64 = Normal::new(0.0, 1.0).unwrap().sample(&mut prng);
            let sigma = config.quality_noise * config.noise_scale(category, query_type);
            PlannedQuery {
                planned_instances: config.planned_instances(i + 1),
                rank: i + 1,
                quality: quality(rating) + sigma * z,
                ctr_offset: config.ctr_nuisance * nuisance,
                query,
                rating,
                category,
                query_type,
            }
        })
        .collect();

    let mut follow_ups: BTreeMap<QueryCategory, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, q) in queries.iter().enumerate() {
        let (idx, cum) = follow_ups.entry(q.category).or_default();
        let total = cum.last().copied().unwrap_or(0) + q.planned_instances;
        idx.push(i);
        cum.push(total);
    }
    Ok(CorpusPlan {
        config: config.clone(),
        queries,
        follow_ups,
    })
}

/// Events of one instance plus the quantities needed to schedule a follow-up.
struct InstanceDraw {
    events: Vec<InteractionEvent>,
    end_ms: i64,
}

struct Ids<'a> {
    instance: &'a str,
    session: &'a str,
    user: &'a str,
    raw_query: &'a str,
}

fn draw_instance(
    config: &GeneratorConfig,
    q: &PlannedQuery,
    ids: &Ids<'_>,
    start: i64,
    rng: &mut ChaCha8Rng,
) -> InstanceDraw {
    let links = &config.links;
    let x = if rng.random_bool(config.instance_noise) {
        rng.random::<f64>()
    } else {
        q.quality
    };
    let mut events = Vec::with_capacity(16);
    let mut seq = 0u32;
    let mut push = |events: &mut Vec<InteractionEvent>, kind: EventType, ts: i64, position: Option<u32>| {
        seq += 1;
        events.push(InteractionEvent {
            event_id: format!("{}-{seq:03}", ids.instance),
            query_instance_id: ids.instance.to_string(),
            session_id: ids.session.to_string(),
            user_id: ids.user.to_string(),
            raw_query: ids.raw_query.to_string(),
            event_type: kind,
            timestamp_ms: ts,
            position,
            product_id: position.map(|p| format!("p{:04}-{p:03}", q.rank % 10_000)),
            network_type: None,
            auto_suggest: None,
            num_products_found: None,
        });
    };
    let poisson = |lambda: f64, rng: &mut ChaCha8Rng| -> u32 { Poisson::new(lambda).unwrap().sample(rng) as u32 };

    let products_median = match q.query_type {
        QueryType::Product => 40.0,
        QueryType::FacetCategory => 400.0,
        QueryType::Category => 2500.0,
    };
    let found = LogNormal::new(f64::ln(products_median), 0.8)
        .unwrap()
        .sample(rng)
        .round() as u64;
    let network = if rng.random_bool(links.good_network_rate) {
        *[NetworkType::Wifi, NetworkType::FourG].choose(rng).unwrap()
    } else {
        *[NetworkType::ThreeG, NetworkType::TwoG, NetworkType::Other]
            .choose(rng)
            .unwrap()
    };
    let auto_suggest = rng.random_bool((links.auto_suggest_base + links.auto_suggest_slope * x).clamp(0.0, 1.0));
    push(&mut events, EventType::SerpShown, start, None);
    if let Some(serp) = events.last_mut() {
        serp.network_type = Some(network);
        serp.auto_suggest = Some(auto_suggest);
        serp.num_products_found = Some(found);
    }

    let mut last = start;
    let impressions = poisson(rate(links.impressions_base, links.impressions_slope, x), rng);
    for k in 0..impressions {
        let ts = start + 150 * i64::from(k + 1) + rng.random_range(0..100);
        push(&mut events, EventType::ProductImpression, ts, Some(k + 1));
        last = last.max(ts);
    }
    let browse_end = start + 1000 + rng.random_range(0..4000);
    for _ in 0..poisson(rate(links.swipes_base, links.swipes_slope, x), rng) {
        let ts = start + rng.random_range(200..=browse_end - start + 200);
        push(&mut events, EventType::Swipe, ts, None);
        last = last.max(ts);
    }
    for _ in 0..poisson(rate(links.filters_base, links.filters_slope, x), rng) {
        let ts = start + rng.random_range(300..=browse_end - start + 300);
        push(&mut events, EventType::FilterApply, ts, None);
        last = last.max(ts);
    }
    for _ in 0..poisson(rate(links.sorts_base, links.sorts_slope, x), rng) {
        let ts = start + rng.random_range(300..=browse_end - start + 300);
        push(&mut events, EventType::SortApply, ts, None);
        last = last.max(ts);
    }

    let click_p = logistic(links.click_logit_base + links.click_logit_slope * x + q.ctr_offset);
    if rng.random_bool(click_p) {
        let median = (links.ttfc_median_base_ms + links.ttfc_median_slope_ms * x).max(200.0);
        let ttfc = LogNormal::new(median.ln(), links.ttfc_log_sigma)
            .unwrap()
            .sample(rng)
            .round()
            .max(1.0) as i64;
        let clicks = 1 + poisson(rate(links.extra_clicks_base, links.extra_clicks_slope, x), rng);
        let gap: Exp<f64> = Exp::new(1.0 / 15_000.0).unwrap();
        let mut ts = start + ttfc;
        let first_position = 1 + poisson(rate(links.position_base, links.position_slope, x), rng);
        let cart_p = logistic(links.cart_logit_base + links.cart_logit_slope * x);
        let mut carted = false;
        for c in 0..clicks {
            let position = if c == 0 {
                first_position
            } else {
                rng.random_range(1..=first_position + 10)
            };
            push(&mut events, EventType::Click, ts, Some(position));
            last = last.max(ts);
            if rng.random_bool(if carted { cart_p * 0.3 } else { cart_p }) {
                carted = true;
                let cart_ts = ts + 2_000 + gap.sample(rng).round() as i64;
                push(&mut events, EventType::CartAdd, cart_ts, None);
                last = last.max(cart_ts);
                ts = cart_ts;
            }
            ts += 1_000 + gap.sample(rng).round() as i64;
        }
    }
    if rng.random_bool(links.exit_rate) {
        last += 500 + rng.random_range(0..5000);
        push(&mut events, EventType::SerpExit, last, None);
    }
    InstanceDraw { events, end_ms: last }
}

fn raw_form(query: &str, rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..20) {
        0 => query.to_uppercase(),
        1 => format!("  {}", query.replace(' ', "  ")),
        2 => {
            let mut chars = query.chars();
            chars
                .next()
                .map_or_else(String::new, |c| c.to_uppercase().chain(chars).collect())
        }
        _ => query.to_string(),
    }
}

/// Instances per work block; blocks are generated in parallel and emitted
/// in order.
const BLOCK: usize = 4096;

impl CorpusPlan {
    pub fn labels(&self) -> BTreeMap<String, ExpertLabel> {
        self.queries
            .iter()
            .map(|q| (q.query.clone(), ExpertLabel { rating: q.rating }))
            .collect()
    }

    pub fn planned_total(&self) -> usize {
        self.queries.iter().map(|q| q.planned_instances).sum()
    }

    fn follow_up_target(&self, category: QueryCategory, rng: &mut ChaCha8Rng) -> usize {
        let (idx, cum) = &self.follow_ups[&category];
        let pick = rng.random_range(0..*cum.last().expect("category has queries"));
        idx[cum.partition_point(|c| *c <= pick)]
    }

    /// Instance `k` of query `qi`, followed by its reformulation if any.
    fn instances_for(&self, qi: usize, k: usize, out: &mut Vec<QueryInstance>) {
        let config = &self.config;
        let q = &self.queries[qi];
        let mut rng = stream_rng(config.seed, DOMAIN_INSTANCES, ((qi as u64) << 32) | k as u64);
        let instance = format!("qi{qi:05}-{k:06}");
        let session = format!("s{qi:05}-{k:06}");
        let user = format!("u{:05}", rng.random_range(0..50_000));
        let start = config.start_ms + rng.random_range(0..7 * 24 * 3_600_000);
        let raw = raw_form(&q.query, &mut rng);
        let ids = Ids {
            instance: &instance,
            session: &session,
            user: &user,
            raw_query: &raw,
        };
        let first = draw_instance(config, q, &ids, start, &mut rng);
        let reformulate = config.reformulation_rate * (1.0 - q.quality).clamp(0.0, 1.0);
        let follow = rng.random_bool(reformulate);
        out.push(QueryInstance::from_events(first.events).expect("generated instances are valid"));
        if follow {
            let target = self.follow_up_target(q.category, &mut rng);
            let tq = &self.queries[target];
            let instance = format!("{instance}-r");
            let raw = raw_form(&tq.query, &mut rng);
            let ids = Ids {
                instance: &instance,
                session: &session,
                user: &user,
                raw_query: &raw,
            };
            let start = first.end_ms + 2_000 + rng.random_range(0..30_000);
            let draw = draw_instance(config, tq, &ids, start, &mut rng);
            out.push(QueryInstance::from_events(draw.events).expect("generated instances are valid"));
        }
    }

    /// Streams every instance in a fixed order: by query rank, then by
    /// instance number, each instance followed by its reformulation.
    pub fn for_each_instance<F: FnMut(QueryInstance)>(&self, mut sink: F) {
        let mut blocks: Vec<(usize, usize, usize)> = Vec::new();
        for (qi, q) in self.queries.iter().enumerate() {
            let mut k = 0;
            while k < q.planned_instances {
                let end = (k + BLOCK).min(q.planned_instances);
                blocks.push((qi, k, end));
                k = end;
            }
        }
        let wave = rayon::current_num_threads().max(1) * 2;
        for group in blocks.chunks(wave) {
            let generated: Vec<Vec<QueryInstance>> = group
                .par_iter()
                .map(|(qi, from, to)| {
                    let mut out = Vec::with_capacity(to - from + to / 4);
                    for k in *from..*to {
                        self.instances_for(*qi, k, &mut out);
                    }
                    out
                })
                .collect();
            for instance in generated.into_iter().flatten() {
                sink(instance);
            }
        }
    }

    pub fn manifest(&self, summary: &CorpusSummary) -> Manifest {
        Manifest {
            format_version: 1,
            config: self.config.clone(),
            summary: summary.clone(),
            queries: self
                .queries
                .iter()
                .map(|q| ManifestQuery {
                    query: q.query.clone(),
                    rating: q.rating,
                    category: q.category,
                    query_type: q.query_type,
                    planned_instances: q.planned_instances,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub queries: usize,
    pub instances: usize,
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestQuery {
    pub query: String,
    pub rating: u8,
    pub category: QueryCategory,
    pub query_type: QueryType,
    pub planned_instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: GeneratorConfig,
    pub summary: CorpusSummary,
    pub queries: Vec<ManifestQuery>,
}

/// Writes `events.jsonl`, `labels.csv` and `manifest.json` into `dir`.
pub fn write_corpus(plan: &CorpusPlan, dir: &Path) -> Result<CorpusSummary> {
    std::fs::create_dir_all(dir)?;
    let mut events = BufWriter::with_capacity(1 << 20, File::create(dir.join("events.jsonl"))?);
    let mut summary = CorpusSummary {
        queries: plan.queries.len(),
        ..CorpusSummary::default()
    };
    let mut pending: Vec<QueryInstance> = Vec::with_capacity(BLOCK);
    let mut failure: Option<Error> = None;
    plan.for_each_instance(|instance| {
        if failure.is_some() {
            return;
        }
        summary.instances += 1;
        summary.events += instance.events.len();
        pending.push(instance);
        if pending.len() >= BLOCK {
            if let Err(e) = write_events(&mut events, pending.iter()) {
                failure = Some(e);
            }
            pending.clear();
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    write_events(&mut events, pending.iter())?;
    events.flush()?;
    write_labels(File::create(dir.join("labels.csv"))?, &plan.labels())?;
    let manifest = serde_json::to_string_pretty(&plan.manifest(&summary))?;
    std::fs::write(dir.join("manifest.json"), manifest + "\n")?;
    Ok(summary)
}

/// The behavioral metrics whose per-rating means must increase with rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendMetric {
    NumClicks,
    NumSwipes,
    NumCarts,
    NumFilters,
    NumSorts,
    NumImpressions,
    ClickSuccessRate,
    CartSuccessRate,
    TimeToFirstClick,
    PosFirstClick,
}

impl TrendMetric {
    pub const ALL: [TrendMetric; 10] = [
        TrendMetric::NumClicks,
        TrendMetric::NumSwipes,
        TrendMetric::NumCarts,
        TrendMetric::NumFilters,
        TrendMetric::NumSorts,
        TrendMetric::NumImpressions,
        TrendMetric::ClickSuccessRate,
        TrendMetric::CartSuccessRate,
        TrendMetric::TimeToFirstClick,
        TrendMetric::PosFirstClick,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrendMetric::NumClicks => "num_clicks",
            TrendMetric::NumSwipes => "num_swipes",
            TrendMetric::NumCarts => "num_carts",
            TrendMetric::NumFilters => "num_filters",
            TrendMetric::NumSorts => "num_sorts",
            TrendMetric::NumImpressions => "num_impressions",
            TrendMetric::ClickSuccessRate => "click_success_rate",
            TrendMetric::CartSuccessRate => "cart_success_rate",
            TrendMetric::TimeToFirstClick => "time_to_first_click",
            TrendMetric::PosFirstClick => "pos_first_click",
        }
    }

    /// Instance-level value; click timing and position only exist for
    /// clicked instances.
    pub fn value(self, m: &QueryInstanceMetrics) -> Option<f64> {
        match self {
            TrendMetric::NumClicks => Some(f64::from(m.num_clicks)),
            TrendMetric::NumSwipes => Some(f64::from(m.num_swipes)),
            TrendMetric::NumCarts => Some(f64::from(m.num_carts)),
            TrendMetric::NumFilters => Some(f64::from(m.num_filters)),
            TrendMetric::NumSorts => Some(f64::from(m.num_sorts)),
            TrendMetric::NumImpressions => Some(f64::from(m.num_impressions)),
            TrendMetric::ClickSuccessRate => Some(f64::from(u8::from(m.click_success))),
            TrendMetric::CartSuccessRate => Some(f64::from(u8::from(m.cart_success))),
            TrendMetric::TimeToFirstClick => m.time_to_first_click_ms.map(|v| v as f64),
            TrendMetric::PosFirstClick => m.pos_first_click.map(f64::from),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct Moments {
    n: u64,
    sum: f64,
    sum_sq: f64,
}

/// Per-rating running sums of the trend metrics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrendAccumulator {
    moments: BTreeMap<(TrendMetric, u8), Moments>,
}

impl TrendAccumulator {
    pub fn add(&mut self, rating: u8, m: &QueryInstanceMetrics) {
        for metric in TrendMetric::ALL {
            if let Some(v) = metric.value(m) {
                let slot = self.moments.entry((metric, rating)).or_default();
                slot.n += 1;
                slot.sum += v;
                slot.sum_sq += v * v;
            }
        }
    }

    /// Mean and standard error of the mean per rating for each metric.
    pub fn summary(&self) -> BTreeMap<TrendMetric, Vec<RatingMean>> {
        let mut out: BTreeMap<TrendMetric, Vec<RatingMean>> = BTreeMap::new();
        for ((metric, rating), m) in &self.moments {
            let n = m.n as f64;
            let mean = m.sum / n;
            let var = (m.sum_sq / n - mean * mean).max(0.0);
            out.entry(*metric).or_default().push(RatingMean {
                rating: *rating,
                n: m.n,
                mean,
                std_error: (var / n).sqrt(),
            });
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingMean {
    pub rating: u8,
    pub n: u64,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub metrics: BTreeMap<TrendMetric, Vec<RatingMean>>,
    pub head_to_bottom_ratio: Option<f64>,
}

/// Smallest accepted per-rating sample for a trend check.
pub const MIN_TREND_SAMPLES: u64 = 1000;
pub const RATIO_RANGE: (f64, f64) = (17.0, 51.0);

/// Checks that every trend metric's per-rating mean rises from rating 1 to 5
/// with each adjacent gap above 3 combined standard errors, and that the
/// Head/TorsoBottom mean-count ratio falls in [`RATIO_RANGE`].
pub fn manifest_check(
    trends: &TrendAccumulator,
    query_counts: &BTreeMap<String, usize>,
    head_pct: f64,
    torso_pct: f64,
) -> Result<TrendReport> {
    let metrics = trends.summary();
    for metric in TrendMetric::ALL {
        let name = metric.name().to_string();
        let means = metrics.get(&metric).cloned().unwrap_or_default();
        let ratings: Vec<u8> = means.iter().map(|m| m.rating).collect();
        if ratings != [1, 2, 3, 4, 5] {
            return Err(Error::Trend {
                metric: name,
                detail: format!("ratings present {ratings:?}; need 1..5"),
            });
        }
        if let Some(small) = means.iter().find(|m| m.n < MIN_TREND_SAMPLES) {
            return Err(Error::Trend {
                metric: name,
                detail: format!(
                    "rating {} has {} samples; need {MIN_TREND_SAMPLES}",
                    small.rating, small.n
                ),
            });
        }
        for pair in means.windows(2) {
            let gap = pair[1].mean - pair[0].mean;
            let bound = 3.0 * pair[0].std_error.hypot(pair[1].std_error);
            if !(gap > bound) {
                return Err(Error::Trend {
                    metric: name,
                    detail: format!(
                        "rating {} -> {}: mean gap {gap:.6} not above 3 standard errors ({bound:.6})",
                        pair[0].rating, pair[1].rating
                    ),
                });
            }
        }
    }
    let segments = assign_volume_segments(query_counts, head_pct, torso_pct)?;
    let ratio = head_to_bottom_ratio(query_counts, &segments);
    match ratio {
        Some(r) if (RATIO_RANGE.0..=RATIO_RANGE.1).contains(&r) => {}
        other => {
            return Err(Error::Trend {
                metric: "head_to_bottom_ratio".into(),
                detail: format!("{other:?} outside [{}, {}]", RATIO_RANGE.0, RATIO_RANGE.1),
            })
        }
    }
    Ok(TrendReport {
        metrics,
        head_to_bottom_ratio: ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::extract_instance_metrics;

    fn small() -> GeneratorConfig {
        GeneratorConfig {
            n_queries: 60,
            min_instances: 3,
            instance_scale: 40.0,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(GeneratorConfig::default().validate().is_ok());
        let mut c = small();
        c.rating_prior = [0.5, 0.5, 0.5, 0.0, 0.0];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = small();
        c.links.click_logit_slope = -1.0;
        assert!(c.validate().is_err());
        let mut c = small();
        c.instance_noise = 1.5;
        assert!(c.validate().is_err());
        let parsed: GeneratorConfig = toml::from_str("n_queries = 10\n[links]\nexit_rate = 0.5\n").unwrap();
        assert_eq!(parsed.n_queries, 10);
        assert_eq!(parsed.links.exit_rate, 0.5);
        assert_eq!(parsed.links.click_logit_base, LinkParams::default().click_logit_base);
        assert!(toml::from_str::<GeneratorConfig>("bogus = 1").is_err());
    }

    #[test]
    fn links_increase_with_rating() {
        let links = LinkParams::default();
        for r in 1..5u8 {
            assert!(links.click_probability(r) < links.click_probability(r + 1));
            assert!(links.expected_clicks(r) < links.expected_clicks(r + 1));
            assert!(links.ttfc_median_ms(r) < links.ttfc_median_ms(r + 1));
        }
    }

    #[test]
    fn quota_matches_prior() {
        let ratings = rating_quota(&DEFAULT_PRIOR, 5000);
        assert_eq!(ratings.len(), 5000);
        let dsat = ratings.iter().filter(|r| **r <= 3).count() as f64 / 5000.0;
        assert!((dsat - 6949.0 / 18613.0).abs() < 0.001);
    }

    #[test]
    fn volume_plan_is_zipf_with_floor() {
        let c = GeneratorConfig::default();
        assert_eq!(
            c.planned_instances(1),
            101 + (400_000.0 * 11f64.powf(-1.1)).floor() as usize
        );
        assert_eq!(
            c.planned_instances(2),
            101 + (400_000.0 * 12f64.powf(-1.1)).floor() as usize
        );
        assert!((1..=5000).all(|r| c.planned_instances(r) > 100));
    }

    #[test]
    fn generation_is_deterministic_and_ingestible() {
        let dir = tempfile::tempdir().unwrap();
        let plan_a = plan(&small()).unwrap();
        let summary = write_corpus(&plan_a, dir.path()).unwrap();
        let bytes = std::fs::read(dir.path().join("events.jsonl")).unwrap();
        let other = tempfile::tempdir().unwrap();
        write_corpus(&plan(&small()).unwrap(), other.path()).unwrap();
        assert_eq!(bytes, std::fs::read(other.path().join("events.jsonl")).unwrap());
        assert_eq!(
            std::fs::read(dir.path().join("manifest.json")).unwrap(),
            std::fs::read(other.path().join("manifest.json")).unwrap()
        );

        let (instances, stats) = crate::event_log::ingest_events(bytes.as_slice()).unwrap();
        assert_eq!(stats.dropped_instances, 0);
        assert_eq!(stats.malformed_lines, 0);
        assert_eq!(instances.len(), summary.instances);
        assert!(summary.instances >= plan_a.planned_total());
        let labels = crate::event_log::ingest_labels(File::open(dir.path().join("labels.csv")).unwrap()).unwrap();
        for instance in &instances {
            assert!(
                labels.labels.contains_key(&instance.normalized_query),
                "{}",
                instance.normalized_query
            );
        }
    }

    #[test]
    fn manifest_categories_match_classifier() {
        let lexicons = MetaLexicons::default();
        let p = plan(&GeneratorConfig {
            n_queries: 400,
            ..small()
        })
        .unwrap();
        for q in &p.queries {
            assert_eq!(classify(&q.query, &lexicons), (q.category, q.query_type));
        }
        let types: HashSet<QueryType> = p.queries.iter().map(|q| q.query_type).collect();
        assert_eq!(types.len(), 3);
        let cats: HashSet<QueryCategory> = p.queries.iter().map(|q| q.category).collect();
        assert_eq!(cats.len(), 6);
    }

    fn trends_for(config: &GeneratorConfig) -> (TrendAccumulator, BTreeMap<String, usize>) {
        let p = plan(config).unwrap();
        let ratings: BTreeMap<&str, u8> = p.queries.iter().map(|q| (q.query.as_str(), q.rating)).collect();
        let mut acc = TrendAccumulator::default();
        let mut counts = BTreeMap::new();
        p.for_each_instance(|instance| {
            acc.add(
                ratings[instance.normalized_query.as_str()],
                &extract_instance_metrics(&instance),
            );
            *counts.entry(instance.normalized_query).or_insert(0) += 1;
        });
        (acc, counts)
    }

    #[test]
    fn clicks_rise_with_rating() {
        let config = GeneratorConfig {
            n_queries: 200,
            min_instances: 60,
            instance_scale: 0.0,
            ..GeneratorConfig::default()
        };
        let (acc, _) = trends_for(&config);
        let summary = acc.summary();
        let clicks = &summary[&TrendMetric::NumClicks];
        assert!(clicks.windows(2).all(|w| w[0].mean < w[1].mean), "{clicks:?}");
        let ttfc = &summary[&TrendMetric::TimeToFirstClick];
        assert!(ttfc.windows(2).all(|w| w[0].mean < w[1].mean), "{ttfc:?}");
    }

    #[test]
    fn extreme_noise_breaks_trends() {
        let config = GeneratorConfig {
            n_queries: 200,
            min_instances: 60,
            instance_scale: 0.0,
            instance_noise: 1.0,
            ..GeneratorConfig::default()
        };
        let (acc, counts) = trends_for(&config);
        assert!(matches!(
            manifest_check(&acc, &counts, 0.05, 0.5),
            Err(Error::Trend { .. })
        ));
    }
}
