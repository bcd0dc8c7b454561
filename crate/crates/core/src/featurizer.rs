//! Turns per-query aggregates, text features and meta features into one-hot
//! indicator rows: decile binning with a dedicated absent bin, categorical
//! one-hots, lexicon flags and joint-bin interaction features.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metafeat::{QueryCategory, QueryMeta, QueryType, VolumeSegment};
use crate::metrics::{quantile_sorted, NumericMetric, QueryAggregate, RateMetric, Stat};
use crate::textfeat::TextFeatures;

const SCHEME_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "SAT")]
    Sat,
    #[serde(rename = "DSAT")]
    Dsat,
}

impl Label {
    /// DSAT is the positive (target) class.
    pub fn is_positive(self) -> bool {
        self == Label::Dsat
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Sat => "SAT",
            Label::Dsat => "DSAT",
        }
    }
}

/// Ratings 1-3 are DSAT, 4-5 SAT.
pub fn map_label(rating: i64) -> Result<Label> {
    match rating {
        1..=3 => Ok(Label::Dsat),
        4 | 5 => Ok(Label::Sat),
        other => Err(Error::InvalidRating(other)),
    }
}

/// A numeric input of the model, before binning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NumericFeature {
    Stat { metric: NumericMetric, stat: Stat },
    Rate { rate: RateMetric },
    QueryCount,
    CharQueryLen,
    WordQueryLen,
    LmScore,
    QuerySim,
}

impl NumericFeature {
    pub fn all() -> Vec<NumericFeature> {
        let mut all = Vec::new();
        for metric in NumericMetric::ALL {
            for stat in Stat::ALL {
                all.push(NumericFeature::Stat { metric, stat });
            }
        }
        all.extend(RateMetric::ALL.map(|rate| NumericFeature::Rate { rate }));
        all.extend([
            NumericFeature::QueryCount,
            NumericFeature::CharQueryLen,
            NumericFeature::WordQueryLen,
            NumericFeature::LmScore,
            NumericFeature::QuerySim,
        ]);
        all
    }

    pub fn name(self) -> String {
        match self {
            NumericFeature::Stat { metric, stat } => format!("{}_{}", metric.name(), stat.name()),
            NumericFeature::Rate { rate } => rate.name().to_string(),
            NumericFeature::QueryCount => "query_count".into(),
            NumericFeature::CharQueryLen => "char_query_len".into(),
            NumericFeature::WordQueryLen => "word_query_len".into(),
            NumericFeature::LmScore => "lm_score".into(),
            NumericFeature::QuerySim => "query_sim".into(),
        }
    }

    pub fn from_name(name: &str) -> Option<NumericFeature> {
        NumericFeature::all().into_iter().find(|f| f.name() == name)
    }

    pub fn value(self, inputs: &QueryInputs) -> Option<f64> {
        match self {
            NumericFeature::Stat { metric, stat } => inputs.aggregate.stat(metric).get(stat),
            NumericFeature::Rate { rate } => Some(inputs.aggregate.rate(rate)),
            NumericFeature::QueryCount => Some(inputs.aggregate.query_count as f64),
            NumericFeature::CharQueryLen => Some(inputs.text.char_query_len as f64),
            NumericFeature::WordQueryLen => Some(inputs.text.word_query_len as f64),
            NumericFeature::LmScore => Some(inputs.text.lm_score),
            NumericFeature::QuerySim => inputs.text.query_sim,
        }
    }
}

/// Everything known about one query before encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryInputs {
    pub normalized_query: String,
    pub aggregate: QueryAggregate,
    pub text: TextFeatures,
    pub meta: QueryMeta,
    pub rating: Option<u8>,
}

impl QueryInputs {
    pub fn label(&self) -> Option<Label> {
        self.rating.and_then(|r| map_label(i64::from(r)).ok())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBins {
    pub feature: NumericFeature,
    /// Ascending, strictly increasing cut points. A value `v` falls in bin
    /// `i` where `i` is the number of cuts strictly below `v`.
    pub cuts: Vec<f64>,
}

impl FeatureBins {
    pub fn n_bins(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn bin(&self, value: f64) -> usize {
        self.cuts.partition_point(|cut| *cut < value)
    }
}

/// Decile cut points of `values` (type-7 interpolation). Cuts that do not
/// separate any two distinct training values are dropped, so a feature with
/// `d` distinct values gets at most `d` bins.
pub fn fit_feature_cuts(values: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return Vec::new();
    }
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    let mut cuts: Vec<f64> = Vec::with_capacity(9);
    let mut last_split = 0;
    for decile in 1..=9 {
        let cut = quantile_sorted(&sorted, decile as f64 / 10.0);
        let split = distinct.partition_point(|v| *v <= cut);
        if split == 0 || split == distinct.len() || split == last_split {
            continue;
        }
        last_split = split;
        cuts.push(cut);
    }
    cuts
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interaction {
    pub left: NumericFeature,
    pub right: NumericFeature,
}

impl Interaction {
    pub fn name(&self) -> String {
        format!("{}_x_{}", self.left.name(), self.right.name())
    }
}

/// The default interaction: click success rate crossed with query volume.
pub fn default_interactions() -> Vec<Interaction> {
    vec![Interaction {
        left: NumericFeature::Rate {
            rate: RateMetric::ClickSuccess,
        },
        right: NumericFeature::QueryCount,
    }]
}

/// Fitted encoding: per-feature cut points and the interaction set. Defines
/// the indicator layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningScheme {
    pub format_version: u32,
    pub numeric: Vec<FeatureBins>,
    pub interactions: Vec<Interaction>,
}

const FLAG_NAMES: [&str; 4] = ["contains_sp", "contains_mt", "contains_rs", "contains_units"];

impl BinningScheme {
    /// Fits cut points on the training queries only.
    pub fn fit(train: &[QueryInputs], interactions: Vec<Interaction>) -> Result<Self> {
        let features = NumericFeature::all();
        for interaction in &interactions {
            if !features.contains(&interaction.left) || !features.contains(&interaction.right) {
                return Err(Error::Config(format!("bad interaction {}", interaction.name())));
            }
        }
        let numeric = features
            .into_iter()
            .map(|feature| {
                let values: Vec<f64> = train.iter().filter_map(|q| feature.value(q)).collect();
                FeatureBins {
                    feature,
                    cuts: fit_feature_cuts(&values),
                }
            })
            .collect();
        Ok(BinningScheme {
            format_version: SCHEME_VERSION,
            numeric,
            interactions,
        })
    }

    fn bins_of(&self, feature: NumericFeature) -> &FeatureBins {
        self.numeric
            .iter()
            .find(|b| b.feature == feature)
            .expect("interaction features are validated at fit time")
    }

    /// Names of every indicator, in encoding order.
    pub fn indicator_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for bins in &self.numeric {
            let base = bins.feature.name();
            names.extend((0..bins.n_bins()).map(|i| format!("{base}=bin{i}")));
            names.push(format!("{base}=absent"));
        }
        names.extend(FLAG_NAMES.iter().map(|f| f.to_string()));
        names.extend(QueryCategory::ALL.iter().map(|c| format!("query_cat={}", c.name())));
        names.extend(QueryType::ALL.iter().map(|t| format!("query_type={}", t.name())));
        for interaction in &self.interactions {
            let base = interaction.name();
            let (l, r) = (
                self.bins_of(interaction.left).n_bins(),
                self.bins_of(interaction.right).n_bins(),
            );
            for i in 0..l {
                names.extend((0..r).map(|j| format!("{base}=({i},{j})")));
            }
            names.push(format!("{base}=absent"));
        }
        names
    }

    pub fn n_indicators(&self) -> usize {
        let numeric: usize = self.numeric.iter().map(|b| b.n_bins() + 1).sum();
        let interactions: usize = self
            .interactions
            .iter()
            .map(|i| self.bins_of(i.left).n_bins() * self.bins_of(i.right).n_bins() + 1)
            .sum();
        numeric + FLAG_NAMES.len() + QueryCategory::ALL.len() + QueryType::ALL.len() + interactions
    }

    /// Encodes one query into a 0/1 indicator row.
    pub fn encode_row(&self, inputs: &QueryInputs) -> Vec<u8> {
        let mut row = Vec::with_capacity(self.n_indicators());
        for bins in &self.numeric {
            let start = row.len();
            row.resize(start + bins.n_bins() + 1, 0);
            match bins.feature.value(inputs) {
                Some(v) => row[start + bins.bin(v)] = 1,
                None => row[start + bins.n_bins()] = 1,
            }
        }
        let flags = inputs.text.flags;
        row.extend(
            [
                flags.contains_sp,
                flags.contains_mt,
                flags.contains_rs,
                flags.contains_units,
            ]
            .map(u8::from),
        );
        row.extend(QueryCategory::ALL.map(|c| u8::from(c == inputs.meta.query_cat)));
        row.extend(QueryType::ALL.map(|t| u8::from(t == inputs.meta.query_type)));
        for interaction in &self.interactions {
            let (lb, rb) = (self.bins_of(interaction.left), self.bins_of(interaction.right));
            let start = row.len();
            let cells = lb.n_bins() * rb.n_bins();
            row.resize(start + cells + 1, 0);
            match (interaction.left.value(inputs), interaction.right.value(inputs)) {
                (Some(l), Some(r)) => row[start + lb.bin(l) * rb.n_bins() + rb.bin(r)] = 1,
                _ => row[start + cells] = 1,
            }
        }
        row
    }

    pub fn encode(&self, inputs: &QueryInputs) -> QueryFeatureRecord {
        QueryFeatureRecord {
            normalized_query: inputs.normalized_query.clone(),
            indicators: self.encode_row(inputs),
            label: inputs.label(),
            rating: inputs.rating,
            slices: SliceKeys {
                query_cat: inputs.meta.query_cat,
                query_type: inputs.meta.query_type,
                volume_segment: inputs.meta.volume_segment,
            },
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("scheme serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceKeys {
    pub query_cat: QueryCategory,
    pub query_type: QueryType,
    pub volume_segment: VolumeSegment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFeatureRecord {
    pub normalized_query: String,
    pub indicators: Vec<u8>,
    pub label: Option<Label>,
    pub rating: Option<u8>,
    pub slices: SliceKeys,
}

/// Label-stratified, seeded split of query indices into (train, test).
/// Both returned index lists are sorted.
pub fn split_train_test(labels: &[Label], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [Label::Dsat, Label::Sat] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|i| labels[*i] == class).collect();
        if members.len() < 2 {
            return Err(Error::Stratification(format!(
                "{} has {} record(s); need at least 2",
                class.name(),
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let n_test = ((members.len() as f64 * test_fraction).round() as usize).clamp(1, members.len() - 1);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One row of the exported feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub split: Split,
    pub record: QueryFeatureRecord,
}

const MATRIX_PREFIX: [&str; 7] = [
    "query",
    "split",
    "label",
    "rating",
    "query_cat",
    "query_type",
    "volume_segment",
];

/// Writes the feature matrix CSV: identifying columns, then one column per
/// indicator name.
pub fn write_matrix<W: Write>(writer: W, names: &[String], rows: &[MatrixRow]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let header: Vec<&str> = MATRIX_PREFIX
        .iter()
        .copied()
        .chain(names.iter().map(String::as_str))
        .collect();
    csv.write_record(&header)?;
    for row in rows {
        let r = &row.record;
        let mut fields = vec![
            r.normalized_query.clone(),
            match row.split {
                Split::Train => "train".into(),
                Split::Test => "test".into(),
            },
            r.label.map(|l| l.name().to_string()).unwrap_or_default(),
            r.rating.map(|v| v.to_string()).unwrap_or_default(),
            r.slices.query_cat.name().into(),
            r.slices.query_type.name().into(),
            r.slices.volume_segment.name().into(),
        ];
        fields.extend(r.indicators.iter().map(|v| v.to_string()));
        csv.write_record(&fields)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_matrix<R: Read>(reader: R) -> Result<(Vec<String>, Vec<MatrixRow>)> {
    let mut csv = csv::Reader::from_reader(reader);
    let header = csv.headers()?.clone();
    if header.len() < MATRIX_PREFIX.len() || header.iter().zip(MATRIX_PREFIX).any(|(a, b)| a != b) {
        return Err(Error::Artifact("unexpected feature matrix header".into()));
    }
    let names: Vec<String> = header.iter().skip(MATRIX_PREFIX.len()).map(String::from).collect();
    let mut rows = Vec::new();
    for record in csv.records() {
        let record = record?;
        let bad = |what: &str| Error::Artifact(format!("bad {what} in feature matrix"));
        let split = match &record[1] {
            "train" => Split::Train,
            "test" => Split::Test,
            _ => return Err(bad("split")),
        };
        let label = match &record[2] {
            "" => None,
            "SAT" => Some(Label::Sat),
            "DSAT" => Some(Label::Dsat),
            _ => return Err(bad("label")),
        };
        let rating = match &record[3] {
            "" => None,
            r => Some(r.parse::<u8>().map_err(|_| bad("rating"))?),
        };
        let indicators = record
            .iter()
            .skip(MATRIX_PREFIX.len())
            .map(|v| match v {
                "0" => Ok(0),
                "1" => Ok(1),
                _ => Err(bad("indicator")),
            })
            .collect::<Result<Vec<u8>>>()?;
        if indicators.len() != names.len() {
            return Err(bad("row length"));
        }
        rows.push(MatrixRow {
            split,
            record: QueryFeatureRecord {
                normalized_query: record[0].to_string(),
                indicators,
                label,
                rating,
                slices: SliceKeys {
                    query_cat: record[4].parse()?,
                    query_type: record[5].parse()?,
                    volume_segment: record[6].parse()?,
                },
            },
        });
    }
    Ok((names, rows))
}

/// Scheme plus everything else needed to featurize new logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureContext {
    pub scheme: BinningScheme,
    pub lm: crate::textfeat::NgramLanguageModel,
}

/// Names grouped by the feature group they encode, e.g. every bin of one
/// numeric feature. Used for reporting.
pub fn indicator_groups(names: &[String]) -> BTreeMap<String, Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, name) in names.iter().enumerate() {
        let group = name.split('=').next().unwrap_or(name).to_string();
        groups.entry(group).or_default().push(i);
    }
    groups
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::metrics::{aggregate_query, QueryInstanceMetrics};
    use crate::textfeat::LexiconFlags;
    use proptest::prelude::*;

    pub fn instance_metrics(clicks: u32, ttfc: Option<u64>) -> QueryInstanceMetrics {
        QueryInstanceMetrics {
            time_to_first_click_ms: ttfc,
            time_to_first_cart_ms: None,
            query_duration_ms: ttfc.unwrap_or(0) + 500,
            pos_first_click: ttfc.map(|_| 3),
            num_clicks: if ttfc.is_some() { clicks.max(1) } else { 0 },
            num_swipes: clicks,
            num_carts: 0,
            num_filters: 0,
            num_sorts: 0,
            num_impressions: 5,
            click_success: ttfc.is_some(),
            cart_success: false,
            is_auto_suggest: false,
            is_good_network: true,
            num_products_found: 40,
        }
    }

    pub fn inputs(query: &str, instances: &[QueryInstanceMetrics], rating: u8) -> QueryInputs {
        QueryInputs {
            normalized_query: query.into(),
            aggregate: aggregate_query(query, instances).unwrap(),
            text: TextFeatures {
                char_query_len: query.chars().count(),
                word_query_len: query.split_whitespace().count(),
                lm_score: 10.0 + query.len() as f64,
                query_sim: None,
                flags: LexiconFlags::default(),
            },
            meta: QueryMeta {
                query_cat: QueryCategory::Lifestyle,
                query_type: QueryType::Category,
                volume_segment: VolumeSegment::Head,
            },
            rating: Some(rating),
        }
    }

    #[test]
    fn label_mapping() {
        assert_eq!(map_label(3).unwrap(), Label::Dsat);
        assert_eq!(map_label(4).unwrap(), Label::Sat);
        assert_eq!(map_label(1).unwrap(), Label::Dsat);
        assert_eq!(map_label(5).unwrap(), Label::Sat);
        assert!(matches!(map_label(0), Err(Error::InvalidRating(0))));
        assert!(matches!(map_label(6), Err(Error::InvalidRating(6))));
        assert!(Label::Dsat.is_positive());
    }

    #[test]
    fn decile_cuts_on_one_to_hundred() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        // Oracle: type-7 decile p sits at h = 99p, i.e. 1 + 99p for 1..100.
        let expected: Vec<f64> = (1..=9).map(|d| 1.0 + 99.0 * d as f64 / 10.0).collect();
        let cuts = fit_feature_cuts(&values);
        assert_eq!(cuts.len(), 9);
        for (c, e) in cuts.iter().zip(&expected) {
            assert!((c - e).abs() < 1e-9, "{c} vs {e}");
        }
        assert!((cuts[0] - 10.9).abs() < 1e-9 && (cuts[8] - 90.1).abs() < 1e-9);
    }

    #[test]
    fn degenerate_features_collapse() {
        let constant = FeatureBins {
            feature: NumericFeature::QueryCount,
            cuts: fit_feature_cuts(&[7.0; 50]),
        };
        assert_eq!(constant.n_bins(), 1);
        let five: Vec<f64> = (0..100).map(|i| f64::from(i % 5)).collect();
        let bins = FeatureBins {
            feature: NumericFeature::QueryCount,
            cuts: fit_feature_cuts(&five),
        };
        assert!(bins.n_bins() <= 5);
        let used: std::collections::BTreeSet<usize> = five.iter().map(|v| bins.bin(*v)).collect();
        assert_eq!(used.len(), bins.n_bins());
        assert!(fit_feature_cuts(&[]).is_empty());
    }

    fn training_set() -> Vec<QueryInputs> {
        (0..40)
            .map(|i| {
                let ms: Vec<_> = (0..(i % 7 + 1))
                    .map(|k| instance_metrics(k as u32, (k % 2 == 0).then_some(100 * (i + k) as u64)))
                    .collect();
                inputs(&format!("query {i}"), &ms, (i % 5 + 1) as u8)
            })
            .collect()
    }

    #[test]
    fn encoding_has_one_active_indicator_per_group() {
        let train = training_set();
        let scheme = BinningScheme::fit(&train, default_interactions()).unwrap();
        let names = scheme.indicator_names();
        assert_eq!(names.len(), scheme.n_indicators());
        let groups = indicator_groups(&names);
        for q in &train {
            let row = scheme.encode_row(q);
            assert_eq!(row.len(), names.len());
            for (group, idx) in &groups {
                let active: u8 = idx.iter().map(|i| row[*i]).sum();
                if group.starts_with("contains_") {
                    assert!(active <= 1);
                } else {
                    assert_eq!(active, 1, "group {group}");
                }
            }
        }
    }

    #[test]
    fn absent_and_low_values() {
        let train = training_set();
        let scheme = BinningScheme::fit(&train, default_interactions()).unwrap();
        let names = scheme.indicator_names();
        let never_carted = inputs("q", &[instance_metrics(1, None)], 2);
        let row = scheme.encode_row(&never_carted);
        let absent = names
            .iter()
            .position(|n| n == "time_to_first_cart_mean=absent")
            .unwrap();
        assert_eq!(row[absent], 1);

        let mut tiny = never_carted.clone();
        tiny.text.lm_score = -1e9;
        let row = scheme.encode_row(&tiny);
        let bin0 = names.iter().position(|n| n == "lm_score=bin0").unwrap();
        assert_eq!(row[bin0], 1);
    }

    #[test]
    fn interaction_joint_index() {
        let train = training_set();
        let scheme = BinningScheme::fit(&train, default_interactions()).unwrap();
        let q = &train[11];
        let ctr = scheme.bins_of(NumericFeature::Rate {
            rate: RateMetric::ClickSuccess,
        });
        let count = scheme.bins_of(NumericFeature::QueryCount);
        let (i, j) = (
            ctr.bin(q.aggregate.click_success_rate()),
            count.bin(q.aggregate.query_count as f64),
        );
        let names = scheme.indicator_names();
        let row = scheme.encode_row(q);
        let want = format!("click_success_rate_x_query_count=({i},{j})");
        let idx = names.iter().position(|n| *n == want).unwrap();
        assert_eq!(row[idx], 1);
    }

    #[test]
    fn encoding_test_data_leaves_scheme_untouched() {
        let train = training_set();
        let scheme = BinningScheme::fit(&train[..30], default_interactions()).unwrap();
        let before = scheme.fingerprint();
        for q in &train[30..] {
            scheme.encode(q);
        }
        assert_eq!(before, scheme.fingerprint());
    }

    #[test]
    fn stratified_split_arithmetic() {
        let labels: Vec<Label> = (0..100)
            .map(|i| if i < 40 { Label::Dsat } else { Label::Sat })
            .collect();
        let (train, test) = split_train_test(&labels, 0.2, 7).unwrap();
        assert_eq!(test.iter().filter(|i| labels[**i] == Label::Dsat).count(), 8);
        assert_eq!(test.iter().filter(|i| labels[**i] == Label::Sat).count(), 12);
        assert_eq!(train.len(), 80);
        assert!(train.iter().all(|i| !test.contains(i)));
        assert_eq!(
            split_train_test(&labels, 0.2, 7).unwrap(),
            (train.clone(), test.clone())
        );
        assert_ne!(split_train_test(&labels, 0.2, 8).unwrap().1, test);

        let mut lonely = vec![Label::Sat; 10];
        lonely[3] = Label::Dsat;
        assert!(matches!(
            split_train_test(&lonely, 0.2, 1),
            Err(Error::Stratification(_))
        ));
        assert!(split_train_test(&labels, 1.0, 1).is_err());
    }

    #[test]
    fn matrix_csv_round_trip() {
        let train = training_set();
        let scheme = BinningScheme::fit(&train, default_interactions()).unwrap();
        let names = scheme.indicator_names();
        let rows: Vec<MatrixRow> = train
            .iter()
            .enumerate()
            .map(|(i, q)| MatrixRow {
                split: if i % 5 == 0 { Split::Test } else { Split::Train },
                record: scheme.encode(q),
            })
            .collect();
        let mut buf = Vec::new();
        write_matrix(&mut buf, &names, &rows).unwrap();
        let (back_names, back_rows) = read_matrix(buf.as_slice()).unwrap();
        assert_eq!(back_names, names);
        assert_eq!(back_rows, rows);
    }

    proptest! {
        #[test]
        fn binning_is_monotone(values in prop::collection::vec(-1e3f64..1e3, 1..80), x in -2e3f64..2e3, y in -2e3f64..2e3) {
            let bins = FeatureBins { feature: NumericFeature::LmScore, cuts: fit_feature_cuts(&values) };
            prop_assert!(bins.cuts.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(bins.n_bins() <= 10);
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            prop_assert!(bins.bin(lo) <= bins.bin(hi));
        }
    }
}
