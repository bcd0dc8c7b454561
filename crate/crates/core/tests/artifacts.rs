use querypulse::event_log::{ingest_events, write_events, QueryInstance};
use querypulse::featurizer::{read_matrix, write_matrix, Split};
use querypulse::forest::{FeaturesPerSplit, HyperParams};
use querypulse::metrics::{read_aggregates, write_aggregates};
use querypulse::pipeline::{
    build_inputs, featurize, read_query_sim, train, train_language_model, write_query_sim, LogAccumulator,
    ModelArtifact, PipelineConfig,
};
use querypulse::synthgen::{plan, GeneratorConfig};

fn config() -> PipelineConfig {
    PipelineConfig {
        min_count: 10,
        grid: vec![HyperParams {
            n_trees: 15,
            max_depth: Some(6),
            min_samples_leaf: 1,
            features_per_split: FeaturesPerSplit::Sqrt,
        }],
        cv_folds: 3,
        rfe_drop_fraction: 0.5,
        generator: GeneratorConfig {
            n_queries: 120,
            min_instances: 11,
            instance_scale: 150.0,
            ..GeneratorConfig::default()
        },
        ..PipelineConfig::default()
    }
}

fn instances(config: &PipelineConfig) -> (Vec<QueryInstance>, querypulse::synthgen::CorpusPlan) {
    let corpus = plan(&config.generator).unwrap();
    let mut all = Vec::new();
    corpus.for_each_instance(|i| all.push(i));
    (all, corpus)
}

#[test]
fn events_survive_a_write_and_ingest_cycle() {
    let (all, _) = instances(&config());
    let mut bytes = Vec::new();
    write_events(&mut bytes, &all).unwrap();
    let (mut back, stats) = ingest_events(&bytes[..]).unwrap();
    assert_eq!(stats.malformed_lines, 0);
    assert_eq!(stats.instances, all.len());
    let mut expected = all.clone();
    expected.sort_by(|a, b| a.query_instance_id.cmp(&b.query_instance_id));
    back.sort_by(|a, b| a.query_instance_id.cmp(&b.query_instance_id));
    assert_eq!(back, expected);
}

#[test]
fn aggregates_query_sim_matrix_and_model_round_trip() {
    let config = config();
    let (all, corpus) = instances(&config);
    let mut acc = LogAccumulator::default();
    all.iter().for_each(|i| acc.add(i));
    let summary = acc.finish().unwrap();

    let mut bytes = Vec::new();
    write_aggregates(&mut bytes, &summary.aggregates).unwrap();
    assert_eq!(read_aggregates(&bytes[..]).unwrap(), summary.aggregates);

    let mut bytes = Vec::new();
    write_query_sim(&mut bytes, &summary.query_sim).unwrap();
    assert_eq!(read_query_sim(&bytes[..]).unwrap(), summary.query_sim);

    let lm = train_language_model(&summary.aggregates, &config).unwrap();
    let inputs = build_inputs(&summary.aggregates, &summary.query_sim, &corpus.labels(), &lm, &config).unwrap();
    let features = featurize(&inputs, lm, &config).unwrap();
    let mut bytes = Vec::new();
    write_matrix(&mut bytes, &features.names, &features.rows).unwrap();
    let (names, rows) = read_matrix(&bytes[..]).unwrap();
    assert_eq!(names, features.names);
    assert_eq!(rows, features.rows);
    assert!(rows.iter().any(|r| r.split == Split::Test));

    let model = train(&features, &config).unwrap();
    let back = ModelArtifact::from_json(&model.to_json()).unwrap();
    assert_eq!(back, model);
    for row in &features.rows {
        assert_eq!(
            back.predict(&row.record.indicators).unwrap(),
            model.predict(&row.record.indicators).unwrap()
        );
    }
}

#[test]
fn model_rejects_mismatched_rows_and_unknown_versions() {
    let config = config();
    let (all, corpus) = instances(&config);
    let mut acc = LogAccumulator::default();
    all.iter().for_each(|i| acc.add(i));
    let summary = acc.finish().unwrap();
    let lm = train_language_model(&summary.aggregates, &config).unwrap();
    let inputs = build_inputs(&summary.aggregates, &summary.query_sim, &corpus.labels(), &lm, &config).unwrap();
    let model = train(&featurize(&inputs, lm, &config).unwrap(), &config).unwrap();
    assert!(matches!(model.predict(&[0, 1]), Err(querypulse::Error::Shape { .. })));
    let json = model
        .to_json()
        .replacen("\"format_version\":1", "\"format_version\":9", 1);
    assert!(matches!(
        ModelArtifact::from_json(&json),
        Err(querypulse::Error::Artifact(_))
    ));
}
