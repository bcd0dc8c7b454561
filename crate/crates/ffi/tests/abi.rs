use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use querypulse::forest::{FeaturesPerSplit, HyperParams};
use querypulse::pipeline::{build_inputs, featurize, train, train_language_model, LogAccumulator, PipelineConfig};
use querypulse::synthgen::{plan, GeneratorConfig};
use querypulse_ffi::*;

/// A small trained model as JSON plus one of its training rows.
fn trained_model() -> (String, Vec<u8>, f64) {
    let config = PipelineConfig {
        min_count: 10,
        grid: vec![HyperParams {
            n_trees: 10,
            max_depth: Some(6),
            min_samples_leaf: 1,
            features_per_split: FeaturesPerSplit::Sqrt,
        }],
        cv_folds: 3,
        rfe_drop_fraction: 0.5,
        generator: GeneratorConfig {
            n_queries: 100,
            min_instances: 11,
            instance_scale: 150.0,
            ..GeneratorConfig::default()
        },
        ..PipelineConfig::default()
    };
    let corpus = plan(&config.generator).unwrap();
    let mut acc = LogAccumulator::default();
    corpus.for_each_instance(|i| acc.add(&i));
    let summary = acc.finish().unwrap();
    let lm = train_language_model(&summary.aggregates, &config).unwrap();
    let inputs = build_inputs(&summary.aggregates, &summary.query_sim, &corpus.labels(), &lm, &config).unwrap();
    let features = featurize(&inputs, lm, &config).unwrap();
    let model = train(&features, &config).unwrap();
    let row = features.rows[0].record.indicators.clone();
    let p = model.predict(&row).unwrap();
    (model.to_json(), row, p)
}

fn last_error() -> String {
    let ptr = qp_last_error_message();
    assert!(!ptr.is_null());
    unsafe { CStr::from_ptr(ptr) }.to_string_lossy().into_owned()
}

#[test]
fn model_handle_lifecycle() {
    let (json, row, expected) = trained_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    std::fs::write(&path, &json).unwrap();
    let c_path = CString::new(path.to_str().unwrap()).unwrap();

    let mut model: *mut QpModel = ptr::null_mut();
    assert_eq!(unsafe { qp_model_load(c_path.as_ptr(), &mut model) }, QpStatus::Ok);
    assert!(qp_last_error_message().is_null());
    let mut width = 0usize;
    assert_eq!(unsafe { qp_model_num_indicators(model, &mut width) }, QpStatus::Ok);
    assert_eq!(width, row.len());
    let mut p = -1.0;
    assert_eq!(
        unsafe { qp_model_predict(model, row.as_ptr(), row.len(), &mut p) },
        QpStatus::Ok
    );
    assert_eq!(p, expected);

    let status = unsafe { qp_model_predict(model, row.as_ptr(), row.len() - 1, &mut p) };
    assert_eq!(status, QpStatus::ShapeMismatch);
    assert!(last_error().contains("shape"));
    let mut bad = row.clone();
    bad[0] = 7;
    let status = unsafe { qp_model_predict(model, bad.as_ptr(), bad.len(), &mut p) };
    assert_eq!(status, QpStatus::InvalidArgument);
    unsafe { qp_model_free(model) };
    unsafe { qp_model_free(ptr::null_mut()) };

    let c_json = CString::new(json).unwrap();
    let mut again: *mut QpModel = ptr::null_mut();
    assert_eq!(unsafe { qp_model_load_json(c_json.as_ptr(), &mut again) }, QpStatus::Ok);
    unsafe { qp_model_free(again) };
}

#[test]
fn load_failures_report_status_and_message() {
    let mut model: *mut QpModel = ptr::null_mut();
    let missing = CString::new("/nonexistent/model.json").unwrap();
    assert_eq!(unsafe { qp_model_load(missing.as_ptr(), &mut model) }, QpStatus::Io);
    assert!(!last_error().is_empty());
    assert!(model.is_null());
    let garbage = CString::new("{\"format_version\": 1}").unwrap();
    assert_eq!(
        unsafe { qp_model_load_json(garbage.as_ptr(), &mut model) },
        QpStatus::InvalidArtifact
    );
    assert_eq!(unsafe { qp_model_load(ptr::null(), &mut model) }, QpStatus::NullPointer);
    assert_eq!(
        unsafe { qp_model_load(missing.as_ptr(), ptr::null_mut()) },
        QpStatus::NullPointer
    );
}

#[test]
fn auc_matches_the_library_and_rejects_one_class() {
    let scores = [0.1, 0.4, 0.35, 0.8, 0.4];
    let labels = [0u8, 0, 1, 1, 1];
    let mut out = 0.0;
    assert_eq!(
        unsafe { qp_auc(scores.as_ptr(), labels.as_ptr(), 5, &mut out) },
        QpStatus::Ok
    );
    let bools: Vec<bool> = labels.iter().map(|l| *l != 0).collect();
    assert_eq!(out, querypulse::eval::auc(&scores, &bools).unwrap());
    let ones = [1u8; 5];
    assert_eq!(
        unsafe { qp_auc(scores.as_ptr(), ones.as_ptr(), 5, &mut out) },
        QpStatus::UndefinedAuc
    );
    let nan = [f64::NAN, 0.2];
    assert_eq!(
        unsafe { qp_auc(nan.as_ptr(), labels.as_ptr(), 2, &mut out) },
        QpStatus::InvalidArgument
    );
}

#[test]
fn normalize_query_reports_needed_capacity() {
    let raw = CString::new("  IPhone   X  ").unwrap();
    let mut needed = 0usize;
    let status = unsafe { qp_normalize_query(raw.as_ptr(), ptr::null_mut(), 0, &mut needed) };
    assert_eq!(status, QpStatus::BufferTooSmall);
    let mut buf = vec![0 as std::ffi::c_char; needed];
    let status = unsafe { qp_normalize_query(raw.as_ptr(), buf.as_mut_ptr(), buf.len(), &mut needed) };
    assert_eq!(status, QpStatus::Ok);
    let got = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
    assert_eq!(got, querypulse::event_log::normalize_query("  IPhone   X  ").unwrap());
    let blank = CString::new("   ").unwrap();
    let status = unsafe { qp_normalize_query(blank.as_ptr(), buf.as_mut_ptr(), buf.len(), &mut needed) };
    assert_eq!(status, QpStatus::InvalidArgument);
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(qp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "querypulse.h"

int main(int argc, char **argv) {
    if (argc != 3) return 10;
    QpModel *model = NULL;
    if (qp_model_load(argv[1], &model) != QP_STATUS_OK) {
        fprintf(stderr, "%s\n", qp_last_error_message());
        return 11;
    }
    size_t width = 0;
    if (qp_model_num_indicators(model, &width) != QP_STATUS_OK) return 12;
    uint8_t row[4096];
    if (width > sizeof row) return 13;
    FILE *f = fopen(argv[2], "rb");
    if (!f || fread(row, 1, width, f) != width) return 14;
    fclose(f);
    double p = -1.0;
    if (qp_model_predict(model, row, width, &p) != QP_STATUS_OK) return 15;
    if (qp_model_predict(model, row, width - 1, &p) != QP_STATUS_SHAPE_MISMATCH) return 16;
    qp_model_free(model);
    double scores[4] = {0.1, 0.9, 0.4, 0.6};
    uint8_t labels[4] = {0, 1, 0, 1};
    double auc = 0.0;
    if (qp_auc(scores, labels, 4, &auc) != QP_STATUS_OK) return 17;
    printf("%.17g %.17g\n", p, auc);
    return 0;
}
"#;

#[test]
fn c_program_links_against_the_static_library() {
    let (json, row, expected) = trained_model();
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("model.json"), json).unwrap();
    std::fs::write(dir.path().join("row.bin"), &row).unwrap();
    std::fs::write(dir.path().join("main.c"), C_PROGRAM).unwrap();
    // The test binary lives in <target>/<profile>/deps next to the library.
    let lib_dir: PathBuf = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let exe = dir.path().join("qp_demo");
    let status = Command::new("cc")
        .arg(dir.path().join("main.c"))
        .arg("-I")
        .arg(&include)
        .arg(lib_dir.join("libquerypulse_ffi.a"))
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler runs");
    assert!(status.success(), "C program failed to compile or link");
    let out = Command::new(&exe)
        .arg(dir.path().join("model.json"))
        .arg(dir.path().join("row.bin"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let values: Vec<f64> = text.split_whitespace().map(|v| v.parse().unwrap()).collect();
    assert_eq!(values, vec![expected, 1.0]);
}
