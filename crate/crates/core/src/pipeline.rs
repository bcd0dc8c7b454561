//! Stage orchestration shared by the CLI and the acceptance suite: streaming
//! log accumulation, featurization, training, evaluation and scoring.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{
    auc, ctr_bucket_analysis, operating_point, pr_curve, roc_curve, slice_auc, CtrBucketTable, PrPoint, RocPoint,
    SliceAuc,
};
use crate::event_log::{ExpertLabel, QueryInstance};
use crate::featurizer::{
    default_interactions, split_train_test, BinningScheme, Interaction, Label, MatrixRow, QueryFeatureRecord,
    QueryInputs, Split,
};
use crate::forest::{
    cv_tune, default_grid, rfe, top_importances, train_forest, Dataset, ForestModel, GridPoint, HyperParams, RfeStep,
};
use crate::metafeat::{assign_volume_segments, classify, MetaLexicons, QueryMeta, VolumeSegment};
use crate::metrics::{aggregate_query, extract_instance_metrics, QueryAggregate, QueryInstanceMetrics};
use crate::synthgen::GeneratorConfig;
use crate::textfeat::{per_query_query_sim, text_features, Lexicons, NgramLanguageModel, SessionEntry};

/// Every knob of the pipeline. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Queries need strictly more instances than this to be modeled.
    pub min_count: usize,
    pub test_fraction: f64,
    pub lm_order: usize,
    pub lm_smoothing_k: f64,
    pub grid: Vec<HyperParams>,
    pub cv_folds: usize,
    pub rfe_drop_fraction: f64,
    pub rfe_min_features: usize,
    pub interactions: Vec<Interaction>,
    pub head_pct: f64,
    pub torso_pct: f64,
    pub target_precision: f64,
    /// Directory with the lexicon files; the built-in lexicons when absent.
    pub lexicon_dir: Option<PathBuf>,
    /// Number of passes used to bound memory while ingesting events.
    pub ingest_shards: usize,
    pub generator: GeneratorConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 20180701,
            min_count: 100,
            test_fraction: 0.2,
            lm_order: 2,
            lm_smoothing_k: 0.1,
            grid: default_grid(),
            cv_folds: 5,
            rfe_drop_fraction: 0.2,
            rfe_min_features: 10,
            interactions: default_interactions(),
            head_pct: 0.05,
            torso_pct: 0.5,
            target_precision: 0.85,
            lexicon_dir: None,
            ingest_shards: 4,
            generator: GeneratorConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction {} outside (0, 1)",
                self.test_fraction
            )));
        }
        if self.grid.is_empty() {
            return Err(Error::Config("grid must not be empty".into()));
        }
        for params in &self.grid {
            params.validate()?;
        }
        if self.cv_folds < 2 {
            return Err(Error::Config("cv_folds must be at least 2".into()));
        }
        if !(self.rfe_drop_fraction > 0.0 && self.rfe_drop_fraction < 1.0) {
            return Err(Error::Config("rfe_drop_fraction must lie in (0, 1)".into()));
        }
        if self.rfe_min_features == 0 {
            return Err(Error::Config("rfe_min_features must be positive".into()));
        }
        if !(self.target_precision > 0.0 && self.target_precision <= 1.0) {
            return Err(Error::Config("target_precision must lie in (0, 1]".into()));
        }
        if !(0.0 < self.head_pct && self.head_pct < self.torso_pct && self.torso_pct < 1.0) {
            return Err(Error::Config(
                "segment cutoffs must satisfy 0 < head_pct < torso_pct < 1".into(),
            ));
        }
        self.generator.validate()
    }

    /// SHA-256 of the canonical JSON form; stamped on every artifact.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn lexicons(&self) -> Result<(Lexicons, MetaLexicons)> {
        match &self.lexicon_dir {
            Some(dir) => Ok((Lexicons::load(dir)?, MetaLexicons::load(dir)?)),
            None => Ok((Lexicons::default(), MetaLexicons::default())),
        }
    }
}

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects per-instance metrics and session positions from a stream of
/// instances in any order.
#[derive(Debug, Default)]
pub struct LogAccumulator {
    index: HashMap<String, usize>,
    queries: Vec<String>,
    metrics: Vec<Vec<QueryInstanceMetrics>>,
    sessions: Vec<SessionEntry>,
}

/// Per-query results of a pass over the logs.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSummary {
    /// Every query, sorted by query string.
    pub aggregates: Vec<QueryAggregate>,
    /// Mean similarity to the next query in the session.
    pub query_sim: BTreeMap<String, f64>,
}

impl LogAccumulator {
    pub fn add(&mut self, instance: &QueryInstance) {
        let q = match self.index.get(&instance.normalized_query) {
            Some(q) => *q,
            None => {
                let q = self.queries.len();
                self.index.insert(instance.normalized_query.clone(), q);
                self.queries.push(instance.normalized_query.clone());
                self.metrics.push(Vec::new());
                q
            }
        };
        self.metrics[q].push(extract_instance_metrics(instance));
        self.sessions.push(SessionEntry {
            session_id: instance.session_id().to_string(),
            start_ms: instance.start_ms(),
            query_instance_id: instance.query_instance_id.clone(),
            normalized_query: instance.normalized_query.clone(),
        });
    }

    pub fn instances(&self) -> usize {
        self.sessions.len()
    }

    pub fn finish(self) -> Result<LogSummary> {
        let query_sim = per_query_query_sim(&self.sessions);
        drop(self.sessions);
        let mut aggregates = self
            .queries
            .iter()
            .zip(&self.metrics)
            .map(|(q, m)| aggregate_query(q, m))
            .collect::<Result<Vec<_>>>()?;
        aggregates.sort_by(|a, b| a.normalized_query.cmp(&b.normalized_query));
        Ok(LogSummary { aggregates, query_sim })
    }
}

pub fn write_query_sim<W: Write>(writer: W, sims: &BTreeMap<String, f64>) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["query", "query_sim"])?;
    for (q, s) in sims {
        csv.write_record([q.as_str(), &s.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_query_sim<R: Read>(reader: R) -> Result<BTreeMap<String, f64>> {
    let mut csv = csv::Reader::from_reader(reader);
    let mut sims = BTreeMap::new();
    for record in csv.deserialize::<(String, f64)>() {
        let (q, s) = record?;
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidValue(format!("query_sim {s} for {q:?}")));
        }
        sims.insert(q, s);
    }
    Ok(sims)
}

/// Language model over the logged query stream (each query weighted by its
/// instance count).
pub fn train_language_model(aggregates: &[QueryAggregate], config: &PipelineConfig) -> Result<NgramLanguageModel> {
    NgramLanguageModel::train_weighted(
        aggregates
            .iter()
            .map(|a| (a.normalized_query.as_str(), a.query_count as u64)),
        config.lm_order,
        config.lm_smoothing_k,
    )
}

/// Joins aggregates with text and meta features for the queries that pass
/// the volume filter. Output is sorted by query.
pub fn build_inputs(
    aggregates: &[QueryAggregate],
    query_sim: &BTreeMap<String, f64>,
    labels: &BTreeMap<String, ExpertLabel>,
    lm: &NgramLanguageModel,
    config: &PipelineConfig,
) -> Result<Vec<QueryInputs>> {
    let (lexicons, meta_lexicons) = config.lexicons()?;
    let kept: Vec<&QueryAggregate> = aggregates.iter().filter(|a| a.query_count > config.min_count).collect();
    let counts: BTreeMap<String, usize> = kept
        .iter()
        .map(|a| (a.normalized_query.clone(), a.query_count))
        .collect();
    if counts.is_empty() {
        return Err(Error::InvalidValue(format!(
            "no query has more than {} instances",
            config.min_count
        )));
    }
    let segments = assign_volume_segments(&counts, config.head_pct, config.torso_pct)?;
    let mut inputs: Vec<QueryInputs> = kept
        .into_iter()
        .map(|a| {
            let q = &a.normalized_query;
            let (query_cat, query_type) = classify(q, &meta_lexicons);
            QueryInputs {
                normalized_query: q.clone(),
                aggregate: a.clone(),
                text: text_features(q, lm, &lexicons, query_sim.get(q).copied()),
                meta: QueryMeta {
                    query_cat,
                    query_type,
                    volume_segment: segments[q],
                },
                rating: labels.get(q).map(|l| l.rating),
            }
        })
        .collect();
    inputs.sort_by(|a, b| a.normalized_query.cmp(&b.normalized_query));
    Ok(inputs)
}

/// Language model plus fitted binning: everything needed to encode queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScheme {
    pub format_version: u32,
    pub config_hash: String,
    pub scheme: BinningScheme,
    pub scheme_fingerprint: String,
    pub language_model: NgramLanguageModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub scheme: FeatureScheme,
    pub names: Vec<String>,
    /// Labeled queries, sorted by query, tagged train or test.
    pub rows: Vec<MatrixRow>,
}

/// Stratified split of the labeled queries, then binning fitted on the
/// training part only.
pub fn featurize(inputs: &[QueryInputs], lm: NgramLanguageModel, config: &PipelineConfig) -> Result<FeatureSet> {
    let labeled: Vec<&QueryInputs> = inputs.iter().filter(|q| q.label().is_some()).collect();
    let labels: Vec<Label> = labeled.iter().map(|q| q.label().expect("filtered")).collect();
    let (train, _) = split_train_test(&labels, config.test_fraction, config.seed)?;
    let train_inputs: Vec<QueryInputs> = train.iter().map(|i| labeled[*i].clone()).collect();
    let scheme = BinningScheme::fit(&train_inputs, config.interactions.clone())?;
    let is_train: Vec<bool> = {
        let mut flags = vec![false; labeled.len()];
        train.iter().for_each(|i| flags[*i] = true);
        flags
    };
    let rows = labeled
        .iter()
        .zip(is_train)
        .map(|(q, train)| MatrixRow {
            split: if train { Split::Train } else { Split::Test },
            record: scheme.encode(q),
        })
        .collect();
    Ok(FeatureSet {
        names: scheme.indicator_names(),
        scheme: FeatureScheme {
            format_version: 1,
            config_hash: config.hash(),
            scheme_fingerprint: scheme.fingerprint(),
            scheme,
            language_model: lm,
        },
        rows,
    })
}

fn split_rows(rows: &[MatrixRow], split: Split) -> Vec<&QueryFeatureRecord> {
    rows.iter().filter(|r| r.split == split).map(|r| &r.record).collect()
}

fn dataset_of(records: &[&QueryFeatureRecord]) -> Result<Dataset> {
    let rows: Vec<Vec<u8>> = records.iter().map(|r| r.indicators.clone()).collect();
    let labels: Vec<bool> = records
        .iter()
        .map(|r| {
            r.label
                .map(Label::is_positive)
                .ok_or_else(|| Error::Artifact(format!("unlabeled row {:?}", r.normalized_query)))
        })
        .collect::<Result<_>>()?;
    Dataset::new(&rows, &labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub n_train: usize,
    pub n_positive: usize,
    /// SHA-256 over the training rows (query, label, indicators).
    pub data_hash: String,
}

/// The versioned model artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub config_hash: String,
    pub features: FeatureScheme,
    pub indicator_names: Vec<String>,
    /// Indices into `indicator_names` the forest reads, ascending.
    pub selected: Vec<usize>,
    pub params: HyperParams,
    pub cv_grid: Vec<GridPoint>,
    pub rfe_history: Vec<RfeStep>,
    pub training: TrainingMetadata,
    pub forest: ForestModel,
}

impl ModelArtifact {
    /// DSAT probability of a full indicator row.
    pub fn predict(&self, row: &[u8]) -> Result<f64> {
        if row.len() != self.indicator_names.len() {
            return Err(Error::Shape {
                expected: self.indicator_names.len(),
                got: row.len(),
            });
        }
        let projected: Vec<u8> = self.selected.iter().map(|i| row[*i]).collect();
        self.forest.predict(&projected)
    }

    pub fn selected_names(&self) -> Vec<String> {
        self.selected.iter().map(|i| self.indicator_names[*i].clone()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ModelArtifact = serde_json::from_str(text)?;
        if model.format_version != 1 {
            return Err(Error::Artifact(format!(
                "unsupported model format {}",
                model.format_version
            )));
        }
        if model.selected.iter().any(|i| *i >= model.indicator_names.len())
            || model.forest.n_indicators != model.selected.len()
        {
            return Err(Error::Artifact("selected indicators do not match the forest".into()));
        }
        Ok(model)
    }
}

/// Tunes on the training rows, runs feature elimination with the tuned
/// parameters and fits the final forest on the selected indicators.
pub fn train(features: &FeatureSet, config: &PipelineConfig) -> Result<ModelArtifact> {
    let train_records = split_rows(&features.rows, Split::Train);
    let data = dataset_of(&train_records)?;
    log::info!(
        "tuning over {} grid points on {} rows",
        config.grid.len(),
        data.n_rows()
    );
    let (params, cv_grid) = cv_tune(&data, &config.grid, config.cv_folds, config.seed)?;
    log::info!("tuned parameters {params:?}; running feature elimination");
    let selection = rfe(
        &data,
        &params,
        config.rfe_drop_fraction,
        config.rfe_min_features,
        config.cv_folds,
        config.seed,
    )?;
    let all_rows: Vec<usize> = (0..data.n_rows()).collect();
    let forest = train_forest(&data.subset(&all_rows, &selection.selected), &params, config.seed)?;
    let mut hasher = Sha256::new();
    for r in &train_records {
        hasher.update(r.normalized_query.as_bytes());
        hasher.update([0, u8::from(r.label == Some(Label::Dsat))]);
        hasher.update(&r.indicators);
    }
    Ok(ModelArtifact {
        format_version: 1,
        config_hash: config.hash(),
        features: features.scheme.clone(),
        indicator_names: features.names.clone(),
        selected: selection.selected,
        params,
        cv_grid,
        rfe_history: selection.history,
        training: TrainingMetadata {
            seed: config.seed,
            n_train: data.n_rows(),
            n_positive: data.labels().iter().filter(|l| **l).count(),
            data_hash: hex::encode(hasher.finalize()),
        },
        forest,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OperatingPointOutcome {
    Attained {
        threshold: f64,
        precision: f64,
        recall: f64,
    },
    Unattainable {
        target: f64,
        max_precision: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub config_hash: String,
    pub n_test: usize,
    pub n_test_positive: usize,
    pub overall_auc: f64,
    pub target_precision: f64,
    pub operating_point: OperatingPointOutcome,
    /// Slice dimension (`query_cat`, `query_type`, `volume_segment`) to value to AUC.
    pub slice_aucs: BTreeMap<String, BTreeMap<String, SliceAuc>>,
    pub importances_top10: Vec<(String, f64)>,
    pub ctr_bucket_table: CtrBucketTable,
    pub roc_points: Vec<RocPoint>,
    pub pr_points: Vec<PrPoint>,
}

impl EvalReport {
    pub fn threshold(&self) -> Option<f64> {
        match self.operating_point {
            OperatingPointOutcome::Attained { threshold, .. } => Some(threshold),
            OperatingPointOutcome::Unattainable { .. } => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Human-readable summary table.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let line = |out: &mut String, s: String| {
            out.push_str(&s);
            out.push('\n');
        };
        line(
            &mut out,
            format!("held-out queries  {} ({} DSAT)", self.n_test, self.n_test_positive),
        );
        line(&mut out, format!("overall AUC       {:.4}", self.overall_auc));
        match &self.operating_point {
            OperatingPointOutcome::Attained { threshold, precision, recall } => line(
                &mut out,
                format!(
                    "operating point   threshold {threshold:.4}  precision {precision:.4}  recall {recall:.4}  (target {:.2})",
                    self.target_precision
                ),
            ),
            OperatingPointOutcome::Unattainable { target, max_precision } => line(
                &mut out,
                format!("operating point   unattainable: target {target:.2}, best precision {max_precision:.4}"),
            ),
        }
        for (dimension, slices) in &self.slice_aucs {
            line(&mut out, format!("\nAUC by {dimension}"));
            for (value, s) in slices {
                let auc = s.auc.map_or("undefined".to_string(), |a| format!("{a:.4}"));
                line(
                    &mut out,
                    format!("  {value:<18} {auc:>9}  (DSAT {}, SAT {})", s.n_pos, s.n_neg),
                );
            }
        }
        line(&mut out, "\ntop indicators by Gini importance".into());
        for (name, v) in &self.importances_top10 {
            line(&mut out, format!("  {v:.4}  {name}"));
        }
        line(&mut out, "\nrating distribution per CTR bucket (ratings 1..5)".into());
        for (b, row) in self.ctr_bucket_table.fractions.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|f| format!("{f:.3}")).collect();
            line(
                &mut out,
                format!(
                    "  bucket {}  n={:<5} {}",
                    b + 1,
                    self.ctr_bucket_table.counts[b],
                    cells.join(" ")
                ),
            );
        }
        out
    }
}

/// Scores the held-out rows and assembles the report. The CTR table covers
/// every labeled query in `inputs`.
pub fn evaluate(
    model: &ModelArtifact,
    features: &FeatureSet,
    inputs: &[QueryInputs],
    config: &PipelineConfig,
) -> Result<EvalReport> {
    let test = split_rows(&features.rows, Split::Test);
    let scores: Vec<f64> = test
        .iter()
        .map(|r| model.predict(&r.indicators))
        .collect::<Result<_>>()?;
    let labels: Vec<bool> = test.iter().map(|r| r.label.is_some_and(Label::is_positive)).collect();
    let overall_auc = auc(&scores, &labels)?;
    let operating_point = match operating_point(&scores, &labels, config.target_precision) {
        Ok(op) => OperatingPointOutcome::Attained {
            threshold: op.threshold,
            precision: op.precision,
            recall: op.recall,
        },
        Err(Error::PrecisionUnattainable { target, max_precision }) => {
            OperatingPointOutcome::Unattainable { target, max_precision }
        }
        Err(e) => return Err(e),
    };
    let mut slice_aucs = BTreeMap::new();
    let by = |key: fn(&QueryFeatureRecord) -> &'static str| -> Result<BTreeMap<String, SliceAuc>> {
        let keys: Vec<&str> = test.iter().map(|r| key(r)).collect();
        Ok(slice_auc(&scores, &labels, &keys)?
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect())
    };
    slice_aucs.insert("query_cat".to_string(), by(|r| r.slices.query_cat.name())?);
    slice_aucs.insert("query_type".to_string(), by(|r| r.slices.query_type.name())?);
    slice_aucs.insert("volume_segment".to_string(), by(|r| r.slices.volume_segment.name())?);

    let labeled: Vec<&QueryInputs> = inputs.iter().filter(|q| q.rating.is_some()).collect();
    let ctrs: Vec<f64> = labeled.iter().map(|q| q.aggregate.click_success_rate()).collect();
    let ratings: Vec<u8> = labeled.iter().map(|q| q.rating.expect("filtered")).collect();

    Ok(EvalReport {
        format_version: 1,
        config_hash: config.hash(),
        n_test: test.len(),
        n_test_positive: labels.iter().filter(|l| **l).count(),
        overall_auc,
        target_precision: config.target_precision,
        operating_point,
        slice_aucs,
        importances_top10: top_importances(&model.forest, &model.selected_names(), 10),
        ctr_bucket_table: ctr_bucket_analysis(&ctrs, &ratings)?,
        roc_points: roc_curve(&scores, &labels)?,
        pr_points: pr_curve(&scores, &labels)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub query: String,
    pub dsat_probability: f64,
    /// True when the probability reaches the operating threshold.
    pub intervene: bool,
}

/// Scores queries with a trained model. Segments are recomputed from the
/// scored set's own counts. Without a threshold nothing is flagged.
pub fn score(
    model: &ModelArtifact,
    aggregates: &[QueryAggregate],
    query_sim: &BTreeMap<String, f64>,
    threshold: Option<f64>,
    config: &PipelineConfig,
) -> Result<Vec<QueryScore>> {
    let inputs = build_inputs(
        aggregates,
        query_sim,
        &BTreeMap::new(),
        &model.features.language_model,
        config,
    )?;
    inputs
        .iter()
        .map(|q| {
            let p = model.predict(&model.features.scheme.encode_row(q))?;
            Ok(QueryScore {
                query: q.normalized_query.clone(),
                dsat_probability: p,
                intervene: threshold.is_some_and(|t| p >= t),
            })
        })
        .collect()
}

pub fn write_scores<W: Write>(writer: W, scores: &[QueryScore]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["query", "dsat_probability", "intervene"])?;
    for s in scores {
        csv.write_record([
            s.query.as_str(),
            &s.dsat_probability.to_string(),
            &s.intervene.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Volume segment counts of the modeled queries, used in reports and checks.
pub fn segment_counts(inputs: &[QueryInputs]) -> BTreeMap<VolumeSegment, usize> {
    let mut counts = BTreeMap::new();
    for q in inputs {
        *counts.entry(q.meta.volume_segment).or_insert(0) += 1;
    }
    counts
}
