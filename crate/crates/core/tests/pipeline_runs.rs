use std::fs;
use std::path::{Path, PathBuf};

use subseg::corpus::write_corpus;
use subseg::eventseg::label_corpus;
use subseg::infer::{eval_relations, predict_corpus, GoldScorer};
use subseg::pipeline::{run_pipeline, sha256_hex, EncoderKind, Manifest, RunConfig, MANIFEST_FILE, STAGES};
use subseg::synth::{generate_corpus, GenConfig};
use subseg::Error;

fn small_config(dir: &Path, out: &str) -> RunConfig {
    let corpus = dir.join("corpus.jsonl");
    if !corpus.exists() {
        write_corpus(&generate_corpus(&GenConfig { n_docs: 50, seed: 21, ..Default::default() }).unwrap(), &corpus).unwrap();
    }
    let mut cfg = RunConfig::default().with_seed(21);
    cfg.paths.corpus = corpus;
    cfg.paths.output_dir = dir.join(out);
    cfg.builtin.hash_dim = 32;
    cfg.learning.max_epochs = 50;
    cfg.training.epochs = 3;
    cfg.training.weights.cons = 0.5;
    cfg
}

#[test]
fn full_run_writes_eight_hashed_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "run");
    let out = run_pipeline(&cfg).unwrap();
    let names: Vec<&str> = out.manifest.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(names, STAGES);
    for s in &out.manifest.stages {
        let bytes = fs::read(cfg.paths.output_dir.join(&s.artifact)).unwrap();
        assert_eq!(sha256_hex(&bytes), s.sha256, "{}", s.stage);
    }
    assert_eq!(Manifest::load(cfg.paths.output_dir.join(MANIFEST_FILE)).unwrap(), out.manifest);
    assert_eq!(out.manifest.seed, 21);
    let model = fs::read_to_string(cfg.paths.output_dir.join("06-model.json")).unwrap();
    assert!(model.contains(&out.manifest.config_hash));
    assert!(out.skipped.is_empty());
    let leftovers: Vec<PathBuf> = fs::read_dir(&cfg.paths.output_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(".partial"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn identical_configs_give_identical_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_pipeline(&small_config(tmp.path(), "a")).unwrap();
    let b = run_pipeline(&small_config(tmp.path(), "b")).unwrap();
    assert_eq!(a.manifest.sha256(), b.manifest.sha256());
    assert_eq!(a.metrics, b.metrics);

    // Same directory again: every stage is reused and nothing changes.
    let again = run_pipeline(&small_config(tmp.path(), "a")).unwrap();
    assert_eq!(again.skipped, STAGES);
    assert_eq!(again.manifest, a.manifest);

    let mut other = small_config(tmp.path(), "a");
    other.training.epochs = 2;
    let changed = run_pipeline(&other).unwrap();
    assert!(changed.skipped.is_empty());
    assert_ne!(changed.manifest.config_hash, a.manifest.config_hash);
}

#[test]
fn missing_constraint_file_is_a_config_error_before_training() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path(), "run");
    cfg.paths.constraints = Some(tmp.path().join("nowhere.json"));
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert!(!cfg.paths.output_dir.join("06-model.json").exists());
}

#[test]
fn failed_stage_keeps_partial_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"k": 1, "dim": 41, "rows": [{"w": [], "b": 0.0}]}"#).unwrap();
    let mut cfg = small_config(tmp.path(), "run");
    cfg.paths.constraints = Some(bad);
    match run_pipeline(&cfg) {
        Err(Error::Stage { stage, .. }) => assert_eq!(stage, "learn-constraints"),
        other => panic!("{other:?}"),
    }
    let partial = Manifest::load(cfg.paths.output_dir.join(format!("{MANIFEST_FILE}.partial"))).unwrap();
    assert_eq!(partial.failed_stage.as_deref(), Some("learn-constraints"));
    assert_eq!(partial.stages.len(), 4);
    assert!(cfg.paths.output_dir.join("04-examples.jsonl").exists());
    assert!(!cfg.paths.output_dir.join(MANIFEST_FILE).exists());
}

#[test]
fn gold_predictions_score_perfectly() {
    let corpus = generate_corpus(&GenConfig { n_docs: 60, seed: 5, ..Default::default() }).unwrap();
    let labeled = label_corpus(&corpus).unwrap();
    let (_, test) = labeled.train_test();
    let preds = predict_corpus(&GoldScorer, test, 0.5).unwrap();
    let report = eval_relations(&preds, test, 0).unwrap();
    assert_eq!(report.micro.f1, 1.0);
    assert_eq!(report.parent_child.f1, 1.0);
    assert_eq!(report.child_parent.f1, 1.0);
    assert_eq!(report.num_documents, test.len());
    assert_eq!(report.segmentation.unwrap().f1, 1.0);
}

#[test]
fn external_encoder_run_on_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let mut cfg = RunConfig::default();
    cfg.paths.corpus = fixtures.join("two_docs.jsonl");
    cfg.paths.embeddings = Some(fixtures.join("two_docs.emb"));
    cfg.paths.output_dir = tmp.path().join("ext");
    cfg.encoder = EncoderKind::External;
    cfg.test_split = 0.5;
    cfg.training.epochs = 2;
    cfg.training.dev_fraction = 0.0;
    cfg.training.weights.cons = 0.0;
    cfg.learning.holdout = 0.0;
    cfg.learning.max_epochs = 5;
    let out = run_pipeline(&cfg).unwrap();
    assert_eq!(out.manifest.stages.len(), 8);
    assert_eq!(out.metrics.num_documents, 1);
}
