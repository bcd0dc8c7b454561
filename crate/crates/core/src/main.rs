use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use querypulse::eval::{write_ctr_csv, write_pr_csv, write_roc_csv};
use querypulse::event_log::{ingest_events_sharded, ingest_labels, ExpertLabel, IngestStats};
use querypulse::featurizer::{read_matrix, write_matrix};
use querypulse::metrics::{extract_instance_metrics, read_aggregates, write_aggregates, QueryAggregate};
use querypulse::pipeline::{
    build_inputs, evaluate, featurize, read_query_sim, score, sha256_hex, train, train_language_model, write_query_sim,
    write_scores, EvalReport, FeatureScheme, FeatureSet, LogAccumulator, ModelArtifact, PipelineConfig,
};
use querypulse::synthgen::{manifest_check, plan, write_corpus, TrendAccumulator};

/// Query performance prediction from aggregated search interaction logs.
///
/// Every command reads its inputs from and writes its outputs to the `--out`
/// directory unless an input path is given explicitly. Verbosity follows the
/// QUERYPULSE_LOG environment variable (e.g. QUERYPULSE_LOG=info).
#[derive(Debug, Parser)]
#[command(name = "querypulse", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML pipeline configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides both the pipeline seed and the generator seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Working directory for inputs and outputs.
    #[arg(long, global = true, default_value = "querypulse-out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus: events.jsonl, labels.csv, manifest.json.
    Generate,
    /// Check a corpus: per-rating trends and the head/torso volume ratio.
    Check {
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Parse events into per-query aggregates.csv, query_sim.csv and ingest_stats.json.
    Ingest {
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Build the labeled indicator matrix: features.csv and scheme.json.
    Featurize {
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Tune, select indicators and fit the forest: model.json.
    Train,
    /// Score the held-out split: report.json, report.txt and curve CSVs.
    Evaluate {
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Score query aggregates: scores.csv with DSAT probability and intervention flag.
    Score {
        /// Aggregates to score; defaults to aggregates.csv in the working directory.
        #[arg(long)]
        aggregates: Option<PathBuf>,
        #[arg(long)]
        query_sim: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Intervention threshold; defaults to the operating point in report.json.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Print the summary of an existing report.json.
    Report {
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run generate, ingest, featurize, train and evaluate in sequence.
    Run,
}

/// Errors raised by the binary itself rather than the library.
#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("missing input: {0}")]
    MissingInput(PathBuf),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    exit_code: u8,
}

#[derive(Serialize)]
struct Stamp<'a> {
    format_version: u32,
    stage: &'a str,
    config_hash: String,
    /// SHA-256 of every file the stage wrote.
    outputs: BTreeMap<String, String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QUERYPULSE_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = std::panic::catch_unwind(|| run(&cli));
    let (code, error, message) = match outcome {
        Ok(Ok(())) => return ExitCode::SUCCESS,
        Ok(Err(err)) => classify(&err),
        Err(_) => (4, "panic", "internal invariant violated".to_string()),
    };
    let report = ErrorReport {
        error,
        message,
        exit_code: code,
    };
    eprintln!("{}", serde_json::to_string(&report).expect("error report serializes"));
    ExitCode::from(code)
}

/// Exit code and kind: 2 for missing inputs, 3 for validation failures,
/// 4 for anything else.
fn classify(err: &anyhow::Error) -> (u8, &'static str, String) {
    let message = format!("{err:#}");
    if let Some(cli) = err.downcast_ref::<CliError>() {
        return match cli {
            CliError::MissingInput(_) => (2, "missing_input", message),
            CliError::Config(_) => (3, "config", message),
        };
    }
    if let Some(lib) = err.downcast_ref::<querypulse::Error>() {
        let code = match lib {
            querypulse::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
            querypulse::Error::Io(_) => 4,
            _ => 3,
        };
        return (code, lib.kind(), message);
    }
    (4, "internal", message)
}

struct Workspace {
    config: PipelineConfig,
    out: PathBuf,
}

impl Workspace {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn input(&self, explicit: &Option<PathBuf>, default: &str) -> anyhow::Result<PathBuf> {
        let path = explicit.clone().unwrap_or_else(|| self.path(default));
        if !path.is_file() {
            return Err(CliError::MissingInput(path).into());
        }
        Ok(path)
    }

    fn stamp(&self, stage: &str, files: &[&str]) -> anyhow::Result<()> {
        let mut outputs = BTreeMap::new();
        for f in files {
            let bytes = std::fs::read(self.path(f)).with_context(|| format!("reading back {f}"))?;
            outputs.insert(f.to_string(), sha256_hex(bytes));
        }
        let stamp = Stamp {
            format_version: 1,
            stage,
            config_hash: self.config.hash(),
            outputs,
        };
        write_text(
            &self.path(&format!("{stage}.stamp.json")),
            &(serde_json::to_string_pretty(&stamp)? + "\n"),
        )
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut config = load_config(cli.common.config.as_deref())?;
    if let Some(seed) = cli.common.seed {
        config.seed = seed;
        config.generator.seed = seed;
    }
    config.validate()?;
    std::fs::create_dir_all(&cli.common.out).map_err(querypulse::Error::from)?;
    let ctx = Workspace {
        config,
        out: cli.common.out.clone(),
    };
    log::info!("config hash {}", ctx.config.hash());
    match &cli.command {
        Command::Generate => cmd_generate(&ctx),
        Command::Check { events, labels } => cmd_check(&ctx, events, labels),
        Command::Ingest { events } => cmd_ingest(&ctx, events),
        Command::Featurize { labels } => cmd_featurize(&ctx, labels),
        Command::Train => cmd_train(&ctx),
        Command::Evaluate { labels } => cmd_evaluate(&ctx, labels),
        Command::Score {
            aggregates,
            query_sim,
            model,
            threshold,
        } => cmd_score(&ctx, aggregates, query_sim, model, *threshold),
        Command::Report { report } => cmd_report(&ctx, report),
        Command::Run => {
            cmd_generate(&ctx)?;
            cmd_ingest(&ctx, &None)?;
            cmd_featurize(&ctx, &None)?;
            cmd_train(&ctx)?;
            cmd_evaluate(&ctx, &None)?;
            cmd_report(&ctx, &None)
        }
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    if !path.is_file() {
        return Err(CliError::MissingInput(path.to_path_buf()).into());
    }
    let text = std::fs::read_to_string(path).map_err(querypulse::Error::from)?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())).into())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(querypulse::Error::from)?))
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(querypulse::Error::from)?))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).map_err(querypulse::Error::from)?;
    Ok(())
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    Ok(std::fs::read_to_string(path).map_err(querypulse::Error::from)?)
}

fn cmd_generate(ctx: &Workspace) -> anyhow::Result<()> {
    let corpus = plan(&ctx.config.generator)?;
    log::info!("generating {} planned instances", corpus.planned_total());
    let summary = write_corpus(&corpus, &ctx.out)?;
    log::info!("wrote {} instances, {} events", summary.instances, summary.events);
    ctx.stamp("generate", &["events.jsonl", "labels.csv", "manifest.json"])
}

fn read_labels(path: &Path) -> anyhow::Result<BTreeMap<String, ExpertLabel>> {
    let set = ingest_labels(open(path)?)?;
    if set.stats.rejected > 0 {
        log::warn!("{} of {} label rows rejected", set.stats.rejected, set.stats.records);
    }
    Ok(set.labels)
}

fn ingest_with<S>(ctx: &Workspace, events: &Path, sink: S) -> anyhow::Result<IngestStats>
where
    S: FnMut(querypulse::event_log::QueryInstance),
{
    let stats = ingest_events_sharded(
        || File::open(events).map(|f| BufReader::with_capacity(1 << 20, f)),
        ctx.config.ingest_shards,
        sink,
    )?;
    log::info!(
        "ingested {} instances from {} lines",
        stats.instances,
        stats.total_lines
    );
    Ok(stats)
}

fn cmd_check(ctx: &Workspace, events: &Option<PathBuf>, labels: &Option<PathBuf>) -> anyhow::Result<()> {
    let events = ctx.input(events, "events.jsonl")?;
    let labels = read_labels(&ctx.input(labels, "labels.csv")?)?;
    let mut trends = TrendAccumulator::default();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    ingest_with(ctx, &events, |instance| {
        if let Some(label) = labels.get(&instance.normalized_query) {
            trends.add(label.rating, &extract_instance_metrics(&instance));
        }
        *counts.entry(instance.normalized_query).or_insert(0) += 1;
    })?;
    let report = manifest_check(&trends, &counts, ctx.config.head_pct, ctx.config.torso_pct)?;
    write_text(
        &ctx.path("trend_report.json"),
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    println!(
        "trends ok; head/torso-bottom ratio {}",
        report
            .head_to_bottom_ratio
            .map_or("undefined".into(), |r| format!("{r:.2}"))
    );
    ctx.stamp("check", &["trend_report.json"])
}

fn cmd_ingest(ctx: &Workspace, events: &Option<PathBuf>) -> anyhow::Result<()> {
    let events = ctx.input(events, "events.jsonl")?;
    let mut acc = LogAccumulator::default();
    let stats = ingest_with(ctx, &events, |instance| acc.add(&instance))?;
    let summary = acc.finish()?;
    write_aggregates(create(&ctx.path("aggregates.csv"))?, &summary.aggregates)?;
    write_query_sim(create(&ctx.path("query_sim.csv"))?, &summary.query_sim)?;
    write_text(&ctx.path("ingest_stats.json"), &(stats.to_json() + "\n"))?;
    ctx.stamp("ingest", &["aggregates.csv", "query_sim.csv", "ingest_stats.json"])
}

struct Ingested {
    aggregates: Vec<QueryAggregate>,
    query_sim: BTreeMap<String, f64>,
}

fn load_ingested(
    ctx: &Workspace,
    aggregates: &Option<PathBuf>,
    query_sim: &Option<PathBuf>,
) -> anyhow::Result<Ingested> {
    let aggregates = read_aggregates(open(&ctx.input(aggregates, "aggregates.csv")?)?)?;
    let query_sim = read_query_sim(open(&ctx.input(query_sim, "query_sim.csv")?)?)?;
    Ok(Ingested { aggregates, query_sim })
}

fn cmd_featurize(ctx: &Workspace, labels: &Option<PathBuf>) -> anyhow::Result<()> {
    let ingested = load_ingested(ctx, &None, &None)?;
    let labels = read_labels(&ctx.input(labels, "labels.csv")?)?;
    let lm = train_language_model(&ingested.aggregates, &ctx.config)?;
    let inputs = build_inputs(&ingested.aggregates, &ingested.query_sim, &labels, &lm, &ctx.config)?;
    let features = featurize(&inputs, lm, &ctx.config)?;
    write_matrix(create(&ctx.path("features.csv"))?, &features.names, &features.rows)?;
    write_text(&ctx.path("scheme.json"), &serde_json::to_string(&features.scheme)?)?;
    log::info!(
        "{} labeled rows, {} indicators",
        features.rows.len(),
        features.names.len()
    );
    ctx.stamp("featurize", &["features.csv", "scheme.json"])
}

fn load_features(ctx: &Workspace) -> anyhow::Result<FeatureSet> {
    let scheme: FeatureScheme =
        serde_json::from_str(&read_text(&ctx.input(&None, "scheme.json")?)?).map_err(querypulse::Error::from)?;
    let (names, rows) = read_matrix(open(&ctx.input(&None, "features.csv")?)?)?;
    if names != scheme.scheme.indicator_names() {
        return Err(querypulse::Error::Artifact("features.csv does not match scheme.json".into()).into());
    }
    Ok(FeatureSet { scheme, names, rows })
}

fn cmd_train(ctx: &Workspace) -> anyhow::Result<()> {
    let features = load_features(ctx)?;
    let model = train(&features, &ctx.config)?;
    write_text(&ctx.path("model.json"), &model.to_json())?;
    log::info!(
        "selected {} of {} indicators",
        model.selected.len(),
        model.indicator_names.len()
    );
    ctx.stamp("train", &["model.json"])
}

fn load_model(ctx: &Workspace, path: &Option<PathBuf>) -> anyhow::Result<ModelArtifact> {
    Ok(ModelArtifact::from_json(&read_text(&ctx.input(path, "model.json")?)?)?)
}

fn cmd_evaluate(ctx: &Workspace, labels: &Option<PathBuf>) -> anyhow::Result<()> {
    let model = load_model(ctx, &None)?;
    let features = load_features(ctx)?;
    let ingested = load_ingested(ctx, &None, &None)?;
    let labels = read_labels(&ctx.input(labels, "labels.csv")?)?;
    let inputs = build_inputs(
        &ingested.aggregates,
        &ingested.query_sim,
        &labels,
        &features.scheme.language_model,
        &ctx.config,
    )?;
    let report = evaluate(&model, &features, &inputs, &ctx.config)?;
    write_text(&ctx.path("report.json"), &report.to_json())?;
    write_text(&ctx.path("report.txt"), &report.render_text())?;
    write_roc_csv(create(&ctx.path("roc.csv"))?, &report.roc_points)?;
    write_pr_csv(create(&ctx.path("pr.csv"))?, &report.pr_points)?;
    write_ctr_csv(create(&ctx.path("ctr_buckets.csv"))?, &report.ctr_bucket_table)?;
    ctx.stamp(
        "evaluate",
        &["report.json", "report.txt", "roc.csv", "pr.csv", "ctr_buckets.csv"],
    )
}

fn load_report(ctx: &Workspace, path: &Option<PathBuf>) -> anyhow::Result<EvalReport> {
    Ok(serde_json::from_str(&read_text(&ctx.input(path, "report.json")?)?).map_err(querypulse::Error::from)?)
}

fn cmd_score(
    ctx: &Workspace,
    aggregates: &Option<PathBuf>,
    query_sim: &Option<PathBuf>,
    model: &Option<PathBuf>,
    threshold: Option<f64>,
) -> anyhow::Result<()> {
    let model = load_model(ctx, model)?;
    let threshold = match threshold {
        Some(t) if !(0.0..=1.0).contains(&t) => {
            return Err(CliError::Config(format!("threshold {t} is outside [0, 1]")).into());
        }
        Some(t) => Some(t),
        None => {
            let t = load_report(ctx, &None)?.threshold();
            if t.is_none() {
                log::warn!("report has no attainable operating point; no query is flagged");
            }
            t
        }
    };
    let ingested = load_ingested(ctx, aggregates, query_sim)?;
    let scores = score(
        &model,
        &ingested.aggregates,
        &ingested.query_sim,
        threshold,
        &ctx.config,
    )?;
    write_scores(create(&ctx.path("scores.csv"))?, &scores)?;
    let flagged = scores.iter().filter(|s| s.intervene).count();
    println!("scored {} queries, {flagged} flagged for intervention", scores.len());
    ctx.stamp("score", &["scores.csv"])
}

fn cmd_report(ctx: &Workspace, report: &Option<PathBuf>) -> anyhow::Result<()> {
    let report = load_report(ctx, report)?;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "config {}", report.config_hash).map_err(querypulse::Error::from)?;
    stdout
        .write_all(report.render_text().as_bytes())
        .map_err(querypulse::Error::from)?;
    Ok(())
}
