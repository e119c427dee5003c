//! End-to-end runs: ingest, closure, label-seg, mine-subgraphs,
//! learn-constraints, train, infer, eval.
//!
//! Every stage writes one artifact into the output directory. Artifacts are
//! first written with a `.partial` suffix and renamed once they decode
//! cleanly. `manifest.json` records the seed, the config hash and the sha256 of
//! every artifact; a rerun with the same config hash skips stages whose
//! artifact still matches its recorded hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constraints::{extract_constraints, train as learn, ConstraintFile, LearnConfig, RectifierNet};
use crate::corpus::{parse_corpus, parse_corpus_str, write_document_line, Corpus, DEFAULT_TEST_SPLIT};
use crate::error::{Error, Result};
use crate::eventseg::label_corpus;
use crate::features::{mine_training_examples, read_examples, write_examples, ConstraintExample, MiningConfig};
use crate::infer::{eval_relations, predict_corpus, MetricsReport, ModelScorer, PredictionSet};
use crate::joint::{train_joint, BuiltinEncoder, Checkpoint, Encoder, ExternalEncoder, JointTrainReport, TrainConfig};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

pub const STAGES: [&str; 8] = [
    "ingest",
    "closure",
    "label-seg",
    "mine-subgraphs",
    "learn-constraints",
    "train",
    "infer",
    "eval",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    /// Precomputed constraint file; when absent the constraints are learned.
    pub constraints: Option<PathBuf>,
    /// Embedding file for the external encoder.
    pub embeddings: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: PathBuf::from("corpus.jsonl"),
            constraints: None,
            embeddings: None,
            output_dir: PathBuf::from("run"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    Builtin,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    /// Boundary when the same-segment probability falls below this.
    pub threshold: f64,
    /// Boundary match tolerance in sentences.
    pub window: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            window: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    /// Copied into every stage seed.
    pub seed: u64,
    pub test_split: f64,
    pub encoder: EncoderKind,
    pub builtin: BuiltinEncoder,
    pub mining: MiningConfig,
    pub learning: LearnConfig,
    pub training: TrainConfig,
    pub infer: InferConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            seed: 0,
            test_split: DEFAULT_TEST_SPLIT,
            encoder: EncoderKind::Builtin,
            builtin: BuiltinEncoder::default(),
            mining: MiningConfig::default(),
            learning: LearnConfig::default(),
            training: TrainConfig::default(),
            infer: InferConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Sets the global seed and propagates it to every stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.sync_seeds();
        self
    }

    pub fn sync_seeds(&mut self) {
        self.mining.seed = self.seed;
        self.learning.seed = self.seed;
        self.training.seed = self.seed;
        self.builtin.seed = self.seed;
    }

    /// Checks values and referenced inputs; runs before any stage.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.test_split) {
            return Err(Error::Config(format!("test_split must be in [0, 1), got {}", self.test_split)));
        }
        if !(self.infer.threshold > 0.0 && self.infer.threshold < 1.0) {
            return Err(Error::Config(format!("threshold must be in (0, 1), got {}", self.infer.threshold)));
        }
        if !(self.mining.neg_ratio >= 0.0 && self.mining.neg_ratio.is_finite()) {
            return Err(Error::Config(format!("neg_ratio must be non-negative, got {}", self.mining.neg_ratio)));
        }
        self.training.validate()?;
        if !self.paths.corpus.is_file() {
            return Err(Error::Config(format!("corpus `{}` not found", self.paths.corpus.display())));
        }
        if let Some(p) = &self.paths.constraints {
            if !p.is_file() {
                return Err(Error::Config(format!("constraint file `{}` not found", p.display())));
            }
        }
        if self.encoder == EncoderKind::External {
            match &self.paths.embeddings {
                Some(p) if p.is_file() => {}
                Some(p) => return Err(Error::Config(format!("embedding file `{}` not found", p.display()))),
                None => return Err(Error::Config("the external encoder needs paths.embeddings".into())),
            }
        }
        Ok(())
    }

    /// Hash over the config (minus the output directory) and the input bytes.
    pub fn config_hash(&self) -> Result<String> {
        let mut view = serde_json::to_value(self)?;
        view["paths"]
            .as_object_mut()
            .expect("paths serialize as an object")
            .remove("output_dir");
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&view)?);
        for p in self.input_paths() {
            h.update(sha256_hex(&fs::read(p)?).as_bytes());
        }
        Ok(hex::encode(h.finalize()))
    }

    fn input_paths(&self) -> Vec<&Path> {
        let mut v = vec![self.paths.corpus.as_path()];
        v.extend(self.paths.constraints.as_deref());
        if self.encoder == EncoderKind::External {
            v.extend(self.paths.embeddings.as_deref());
        }
        v
    }

    pub fn build_encoder(&self) -> Result<Encoder> {
        Ok(match self.encoder {
            EncoderKind::Builtin => Encoder::Builtin(self.builtin),
            EncoderKind::External => {
                let p = self
                    .paths
                    .embeddings
                    .as_ref()
                    .ok_or_else(|| Error::Config("the external encoder needs paths.embeddings".into()))?;
                Encoder::External(ExternalEncoder::load(p)?)
            }
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub artifact: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub crate_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub stages: Vec<StageRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifests serialize")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn sha256(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub metrics: MetricsReport,
    /// Stages whose artifacts were reused.
    pub skipped: Vec<String>,
}

/// JSON artifacts carry the run identity next to their payload.
#[derive(Debug, Serialize, Deserialize)]
struct Stamped<T> {
    seed: u64,
    config_hash: String,
    #[serde(flatten)]
    payload: T,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainArtifact {
    checkpoint: Checkpoint,
    report: JointTrainReport,
}

#[derive(Debug, Serialize, Deserialize)]
struct Predictions {
    predictions: PredictionSet,
}

#[derive(Debug, Serialize, Deserialize)]
struct Metrics {
    metrics: MetricsReport,
}

pub fn corpus_bytes(corpus: &Corpus) -> Vec<u8> {
    corpus
        .documents
        .iter()
        .flat_map(|d| {
            let mut line = write_document_line(d).into_bytes();
            line.push(b'\n');
            line
        })
        .collect()
}

fn corpus_from_bytes(bytes: &[u8], origin: &Path, split: f64) -> Result<Corpus> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })?;
    let mut c = parse_corpus_str(text, origin)?;
    c.split = split;
    Ok(c)
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    dir: PathBuf,
    hash: String,
    previous: Option<Manifest>,
    done: Vec<StageRecord>,
    skipped: Vec<String>,
}

impl Runner<'_> {
    fn manifest(&self, failed: Option<&str>, metrics: Option<MetricsReport>) -> Manifest {
        Manifest {
            format_version: MANIFEST_VERSION,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.cfg.seed,
            config_hash: self.hash.clone(),
            stages: self.done.clone(),
            failed_stage: failed.map(str::to_string),
            metrics,
        }
    }

    fn reusable(&self, stage: &str, path: &Path) -> Option<Vec<u8>> {
        let prev = self.previous.as_ref()?;
        if prev.config_hash != self.hash || prev.failed_stage.is_some() {
            return None;
        }
        let rec = prev.stages.iter().find(|r| r.stage == stage)?;
        let bytes = fs::read(path).ok()?;
        (sha256_hex(&bytes) == rec.sha256).then_some(bytes)
    }

    /// Runs or reuses one stage. `produce` computes the artifact bytes;
    /// `decode` turns bytes (fresh or reused) into the stage value.
    fn stage<V>(
        &mut self,
        stage: &str,
        file: &str,
        produce: impl FnOnce() -> Result<Vec<u8>>,
        decode: impl FnOnce(&[u8]) -> Result<V>,
    ) -> Result<V> {
        let path = self.dir.join(file);
        let wrap = |e: Error| Error::Stage {
            stage: stage.to_string(),
            source: Box::new(e),
        };
        let (bytes, value) = match self.reusable(stage, &path) {
            Some(bytes) => {
                log::info!("{stage}: reusing {}", path.display());
                self.skipped.push(stage.to_string());
                let v = decode(&bytes).map_err(wrap)?;
                (bytes, v)
            }
            None => {
                log::info!("{stage}: running");
                let bytes = produce().map_err(wrap)?;
                let partial = self.dir.join(format!("{file}.partial"));
                fs::write(&partial, &bytes).map_err(|e| wrap(e.into()))?;
                let v = decode(&bytes).map_err(wrap)?;
                fs::rename(&partial, &path).map_err(|e| wrap(e.into()))?;
                (bytes, v)
            }
        };
        self.done.push(StageRecord {
            stage: stage.to_string(),
            artifact: file.to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(value)
    }
}

fn unstamp<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    Ok(serde_json::from_slice::<Stamped<T>>(bytes)?.payload)
}

/// Executes the eight stages in order and writes `manifest.json`.
///
/// On failure the completed artifacts stay in place and the manifest is
/// written as `manifest.json.partial` naming the failed stage.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutcome> {
    let mut cfg = cfg.clone();
    cfg.sync_seeds();
    cfg.validate()?;
    let dir = cfg.paths.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let hash = cfg.config_hash()?;
    let previous = Manifest::load(dir.join(MANIFEST_FILE)).ok();
    let mut r = Runner {
        cfg: &cfg,
        dir: dir.clone(),
        hash,
        previous,
        done: Vec::new(),
        skipped: Vec::new(),
    };
    match run_stages(&mut r) {
        Ok(metrics) => {
            let manifest = r.manifest(None, Some(metrics));
            fs::write(dir.join(MANIFEST_FILE), manifest.to_json())?;
            let _ = fs::remove_file(dir.join(format!("{MANIFEST_FILE}.partial")));
            Ok(RunOutcome {
                manifest,
                metrics,
                skipped: r.skipped,
            })
        }
        Err(e) => {
            let failed = match &e {
                Error::Stage { stage, .. } => stage.clone(),
                _ => "setup".to_string(),
            };
            let manifest = r.manifest(Some(&failed), None);
            let _ = fs::remove_file(dir.join(MANIFEST_FILE));
            fs::write(dir.join(format!("{MANIFEST_FILE}.partial")), manifest.to_json())?;
            Err(e)
        }
    }
}

fn run_stages(r: &mut Runner) -> Result<MetricsReport> {
    let cfg = r.cfg;
    let split = cfg.test_split;
    let encoder = cfg.build_encoder()?;

    let ingest_path = r.dir.join("01-ingest.jsonl");
    let ingested = r.stage(
        "ingest",
        "01-ingest.jsonl",
        || Ok(corpus_bytes(&parse_corpus(&cfg.paths.corpus)?)),
        |b| corpus_from_bytes(b, &ingest_path, split),
    )?;
    if let Encoder::External(e) = &encoder {
        e.check_coverage(&ingested)?;
    }

    let closure_path = r.dir.join("02-closure.jsonl");
    let closed = r.stage(
        "closure",
        "02-closure.jsonl",
        || Ok(corpus_bytes(&ingested.closed()?)),
        |b| corpus_from_bytes(b, &closure_path, split),
    )?;

    let seg_path = r.dir.join("03-label-seg.jsonl");
    let labeled = r.stage(
        "label-seg",
        "03-label-seg.jsonl",
        || Ok(corpus_bytes(&label_corpus(&closed)?)),
        |b| corpus_from_bytes(b, &seg_path, split),
    )?;

    let examples: Vec<ConstraintExample> = r.stage(
        "mine-subgraphs",
        "04-examples.jsonl",
        || {
            let ex = mine_training_examples(&labeled, &cfg.mining)?;
            let mut buf = Vec::new();
            write_examples(&ex, &mut buf)?;
            Ok(buf)
        },
        |b| read_examples(std::str::from_utf8(b).map_err(|e| Error::Config(e.to_string()))?),
    )?;

    let (seed, hash) = (cfg.seed, r.hash.clone());
    let constraints: ConstraintFile = r.stage(
        "learn-constraints",
        "05-constraints.json",
        || {
            let mut file = match &cfg.paths.constraints {
                Some(p) => ConstraintFile::load(p)?,
                None => {
                    let (net, report) = learn::<f64>(&examples, &cfg.learning)?;
                    let mut f = ConstraintFile::new(&extract_constraints(&net));
                    f.optimizer = Some(report.optimizer);
                    f.holdout_accuracy = Some(report.holdout_accuracy);
                    f
                }
            };
            file.constraint_set()?;
            file.seed = Some(seed);
            file.config_hash = Some(hash.clone());
            Ok(file.to_json().into_bytes())
        },
        |b| ConstraintFile::from_json(std::str::from_utf8(b).map_err(|e| Error::Config(e.to_string()))?),
    )?;
    let net: RectifierNet<f32> = constraints.constraint_set()?.to_net()?;

    let echo = serde_json::json!({
        "training": cfg.training,
        "encoder": cfg.encoder,
        "builtin": (cfg.encoder == EncoderKind::Builtin).then_some(cfg.builtin),
    });
    let trained: TrainArtifact = r.stage(
        "train",
        "06-model.json",
        || {
            let cons = (cfg.training.weights.cons > 0.0).then_some(&net);
            let (model, report) = train_joint::<f32>(&labeled, cons, &encoder, &cfg.training)?;
            stamp(seed, &hash, TrainArtifact {
                checkpoint: Checkpoint::new(&model, echo),
                report,
            })
        },
        unstamp,
    )?;
    let model = trained.checkpoint.model::<f32>();

    let (_, test) = labeled.train_test();
    let preds: Predictions = r.stage(
        "infer",
        "07-predictions.json",
        || {
            let scorer = ModelScorer {
                model: &model,
                encoder: &encoder,
            };
            stamp(seed, &hash, Predictions {
                predictions: predict_corpus(&scorer, test, cfg.infer.threshold)?,
            })
        },
        unstamp,
    )?;

    let metrics: Metrics = r.stage(
        "eval",
        "08-metrics.json",
        || {
            stamp(seed, &hash, Metrics {
                metrics: eval_relations(&preds.predictions, test, cfg.infer.window)?,
            })
        },
        unstamp,
    )?;
    Ok(metrics.metrics)
}

fn stamp<T: Serialize>(seed: u64, config_hash: &str, payload: T) -> Result<Vec<u8>> {
    let s = Stamped {
        seed,
        config_hash: config_hash.to_string(),
        payload,
    };
    Ok(serde_json::to_vec_pretty(&s)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_propagates_to_stages() {
        let c = RunConfig::default().with_seed(17);
        assert_eq!(c.mining.seed, 17);
        assert_eq!(c.learning.seed, 17);
        assert_eq!(c.training.seed, 17);
        assert_eq!(c.builtin.seed, 17);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let e = RunConfig::from_json(r#"{"sead": 3}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn missing_constraint_file_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("c.jsonl");
        fs::write(&corpus, "").unwrap();
        let mut c = RunConfig::default();
        c.paths.corpus = corpus;
        c.paths.constraints = Some(dir.path().join("absent.json"));
        c.training.weights.cons = 1.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn hash_ignores_output_dir() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("c.jsonl");
        fs::write(&corpus, "").unwrap();
        let mut a = RunConfig::default();
        a.paths.corpus = corpus;
        let mut b = a.clone();
        b.paths.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.config_hash().unwrap(), b.config_hash().unwrap());
        b.seed = 1;
        assert_ne!(a.config_hash().unwrap(), b.config_hash().unwrap());
    }
}
