use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use subseg::constraints::{extract_constraints, train as learn, ConstraintFile, LearnConfig};
use subseg::corpus::{compute_stats, parse_corpus, write_corpus};
use subseg::eventseg::label_corpus;
use subseg::features::{mine_training_examples, read_examples, write_examples, MiningConfig};
use subseg::infer::{eval_relations, predict_corpus, write_pair_tsv, ModelScorer, PredictionSet};
use subseg::joint::{train_joint, BuiltinEncoder, Checkpoint, Encoder, ExternalEncoder, TrainConfig};
use subseg::pipeline::{run_pipeline, EncoderKind, RunConfig};
use subseg::synth::{generate_corpus, GenConfig};
use subseg::{Error, Result};

#[derive(Parser)]
#[command(name = "subseg", version, about = "Subevent relation extraction with event segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncoderArg {
    Builtin,
    External,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a corpus, print relation statistics, write it back normalized.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Complete annotations under transitivity, coreference and converses.
    Closure {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive segment boundaries and same-segment labels.
    LabelSeg {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mine legitimate and illegitimate three-event subgraphs.
    MineSubgraphs {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        neg_ratio: Option<f64>,
        #[arg(long)]
        triple_cap: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the rectifier network and export its rows as inequalities.
    LearnConstraints {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the relation and segmentation heads.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        constraints: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "builtin")]
        encoder: EncoderArg,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict relations and boundaries for the test split.
    Infer {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Predict every document instead of the test split.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against a gold corpus.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value_t = 0)]
        window: usize,
        #[arg(long)]
        all: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        tsv: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with planted event complexes.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage from a single config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn read_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(w.flush()?)
}

fn encoder_from_echo(echo: &serde_json::Value, embeddings: Option<&Path>) -> Result<Encoder> {
    let kind: EncoderKind = serde_json::from_value(echo["encoder"].clone()).unwrap_or_default();
    match kind {
        EncoderKind::Builtin => {
            let b: BuiltinEncoder = serde_json::from_value(echo["builtin"].clone())
                .map_err(|e| Error::Config(format!("checkpoint encoder settings: {e}")))?;
            Ok(Encoder::Builtin(b))
        }
        EncoderKind::External => {
            let p = embeddings.ok_or_else(|| Error::Config("model uses the external encoder; pass --embeddings".into()))?;
            Ok(Encoder::External(ExternalEncoder::load(p)?))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { corpus, out } => {
            let c = parse_corpus(&corpus)?;
            eprintln!("{} documents, {} events", c.documents.len(), c.num_events());
            eprint!("{}", compute_stats(&c.closed()?)?);
            if let Some(out) = out {
                write_corpus(&c, out)?;
            }
        }
        Command::Closure { corpus, out } => {
            write_corpus(&parse_corpus(&corpus)?.closed()?, out)?;
        }
        Command::LabelSeg { corpus, out } => {
            write_corpus(&label_corpus(&parse_corpus(&corpus)?)?, out)?;
        }
        Command::MineSubgraphs {
            corpus,
            neg_ratio,
            triple_cap,
            seed,
            config,
            out,
        } => {
            let mut cfg: MiningConfig = read_json(config.as_deref())?;
            cfg.neg_ratio = neg_ratio.unwrap_or(cfg.neg_ratio);
            cfg.triple_cap = triple_cap.unwrap_or(cfg.triple_cap);
            cfg.seed = seed.unwrap_or(cfg.seed);
            let ex = mine_training_examples(&parse_corpus(&corpus)?, &cfg)?;
            let positives = ex.iter().filter(|e| e.t == 1).count();
            eprintln!("{} examples ({positives} legitimate)", ex.len());
            let mut w = BufWriter::new(File::create(out)?);
            write_examples(&ex, &mut w)?;
            w.flush()?;
        }
        Command::LearnConstraints {
            input,
            k,
            lr,
            epochs,
            seed,
            config,
            out,
        } => {
            let mut cfg: LearnConfig = read_json(config.as_deref())?;
            cfg.k = k.unwrap_or(cfg.k);
            cfg.lr = lr.unwrap_or(cfg.lr);
            cfg.max_epochs = epochs.unwrap_or(cfg.max_epochs);
            cfg.seed = seed.unwrap_or(cfg.seed);
            let ex = read_examples(&fs::read_to_string(&input)?)?;
            let (net, report) = learn::<f64>(&ex, &cfg)?;
            eprintln!(
                "best epoch {} of {}, holdout accuracy {:.4}",
                report.best_epoch, report.epochs_run, report.holdout_accuracy
            );
            let mut file = ConstraintFile::new(&extract_constraints(&net));
            file.optimizer = Some(report.optimizer);
            file.seed = Some(cfg.seed);
            file.holdout_accuracy = Some(report.holdout_accuracy);
            fs::write(out, file.to_json())?;
        }
        Command::Train {
            corpus,
            constraints,
            encoder,
            embeddings,
            config,
            seed,
            out,
        } => {
            let mut cfg: TrainConfig = read_json(config.as_deref())?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            let corpus = label_corpus(&parse_corpus(&corpus)?.closed()?)?;
            let (kind, enc) = match encoder {
                EncoderArg::Builtin => (
                    EncoderKind::Builtin,
                    Encoder::Builtin(BuiltinEncoder {
                        seed: cfg.seed,
                        ..Default::default()
                    }),
                ),
                EncoderArg::External => {
                    let p = embeddings.ok_or_else(|| Error::Config("--encoder external needs --embeddings".into()))?;
                    let e = ExternalEncoder::load(p)?;
                    e.check_coverage(&corpus)?;
                    (EncoderKind::External, Encoder::External(e))
                }
            };
            let net = match (&constraints, cfg.weights.cons > 0.0) {
                (Some(p), _) => Some(ConstraintFile::load(p)?.constraint_set()?.to_net::<f32>()?),
                (None, true) => {
                    return Err(Error::Config("a positive constraint weight needs --constraints".into()));
                }
                (None, false) => None,
            };
            let (model, report) = train_joint::<f32>(&corpus, net.as_ref(), &enc, &cfg)?;
            match report.best_dev_f1 {
                Some(f1) => eprintln!("best epoch {} dev micro-F1 {f1:.4}", report.best_epoch),
                None => eprintln!("trained {} epochs without a dev split", report.epochs_run),
            }
            let builtin = match &enc {
                Encoder::Builtin(b) => json!(b),
                Encoder::External(_) => serde_json::Value::Null,
            };
            let echo = json!({ "training": cfg, "encoder": kind, "builtin": builtin });
            fs::write(out, Checkpoint::new(&model, echo).to_json()?)?;
        }
        Command::Infer {
            corpus,
            model,
            embeddings,
            threshold,
            all,
            out,
        } => {
            let ckpt = Checkpoint::load(&model)?;
            let enc = encoder_from_echo(&ckpt.config, embeddings.as_deref())?;
            let model = ckpt.model::<f32>();
            let corpus = parse_corpus(&corpus)?;
            let docs = if all { &corpus.documents[..] } else { corpus.train_test().1 };
            let scorer = ModelScorer {
                model: &model,
                encoder: &enc,
            };
            write_json(&predict_corpus(&scorer, docs, threshold)?, &out)?;
        }
        Command::Eval {
            corpus,
            predictions,
            window,
            all,
            out,
            tsv,
        } => {
            let gold = label_corpus(&parse_corpus(&corpus)?.closed()?)?;
            let docs = if all { &gold.documents[..] } else { gold.train_test().1 };
            let pred: PredictionSet = serde_json::from_str(&fs::read_to_string(&predictions)?)?;
            let report = eval_relations(&pred, docs, window)?;
            eprint!("{report}");
            match out {
                Some(p) => write_json(&report, &p)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            if let Some(p) = tsv {
                let mut w = BufWriter::new(File::create(p)?);
                write_pair_tsv(&pred, docs, &mut w)?;
                w.flush()?;
            }
        }
        Command::Synth { config, seed, out } => {
            let mut cfg: GenConfig = read_json(config.as_deref())?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            write_corpus(&generate_corpus(&cfg)?, out)?;
        }
        Command::Run { config, seed } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg = cfg.with_seed(s);
            }
            let outcome = run_pipeline(&cfg)?;
            for s in &outcome.skipped {
                eprintln!("reused {s}");
            }
            eprint!("{}", outcome.metrics);
            println!("{}", outcome.manifest.sha256());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
