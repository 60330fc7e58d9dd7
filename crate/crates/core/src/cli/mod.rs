//! The `beeformer` command line.
//!
//! Every command resolves a [`RunConfig`], writes its artifacts into a fresh
//! `<command>-<confighash>-<unixmillis>` directory under `--out` and prints
//! `run_dir=<path>` on success. Failures print one line
//! `error[<class>]: <message>` to stderr and exit nonzero.

pub mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

pub use config::{EvalOn, Flags, Mode, RunConfig, ScorerKind, SplitKind};

use crate::dataio::{
    self, implicitize, join_texts, load_interactions, load_texts, ColumnMap, DatasetBundle,
    Delimited, FilterConfig, TextFormat,
};
use crate::dense::DenseMatrix;
use crate::elsa::{train_elsa, ElsaConfig, ElsaObjective};
use crate::encoders::{
    build_encoder, load_checkpoint, save_checkpoint, CheckpointMeta, EmbeddingTable, EncoderKind,
    EncoderSpec, ItemEncoder,
};
use crate::error::{Error, Result};
use crate::evalkit::{
    evaluate, split_items, split_time, CbfScorer, ElsaScorer, EvalOptions, EvalTask, ItemKnnScorer,
    ItemSplit, OracleScorer, PopularityScorer, RandomScorer, Scorer,
};
use crate::recsys::{top_k_among, EmbeddingMatrix};
use crate::sparse::InteractionMatrix;
use crate::training::{train, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "beeformer", version, about = "Train item-text encoders on implicit feedback")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter raw interactions and item texts into a dataset bundle
    Prepare(Flags),
    /// Train an encoder (or plain ELSA) and write a checkpoint
    Train(Flags),
    /// Encode every catalog item with a trained checkpoint
    Embed(Flags),
    /// Score a held-out split and report Recall@K / NDCG@K
    Evaluate(Flags),
    /// Write top-K recommendations per user (first --k value)
    Recommend(Flags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Prepare(_) => "prepare",
            Command::Train(_) => "train",
            Command::Embed(_) => "embed",
            Command::Evaluate(_) => "evaluate",
            Command::Recommend(_) => "recommend",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Prepare(f)
            | Command::Train(f)
            | Command::Embed(f)
            | Command::Evaluate(f)
            | Command::Recommend(f) => f,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return 2;
        }
    };
    match run(&cli.command) {
        Ok(dir) => {
            println!("run_dir={}", dir.display());
            0
        }
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.class());
            1
        }
    }
}

pub fn run(command: &Command) -> Result<PathBuf> {
    let cfg = RunConfig::resolve(command.flags())?;
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::warn!("thread pool already initialized; --threads ignored");
        }
    }
    let dir = create_run_dir(&cfg.out, command.name(), &cfg.hash12())?;
    write_text(&dir.join("config.json"), &pretty(&cfg))?;
    let result = match command {
        Command::Prepare(_) => cmd_prepare(&cfg, &dir),
        Command::Train(_) => cmd_train(&cfg, &dir),
        Command::Embed(_) => cmd_embed(&cfg, &dir),
        Command::Evaluate(_) => cmd_evaluate(&cfg, &dir),
        Command::Recommend(_) => cmd_recommend(&cfg, &dir),
    };
    match result {
        Ok(()) => Ok(dir),
        Err(e) => {
            let _ = std::fs::remove_dir_all(&dir);
            Err(e)
        }
    }
}

fn create_run_dir(out: &Path, cmd: &str, hash: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut millis = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    loop {
        let dir = out.join(format!("{cmd}-{hash}-{millis}"));
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => millis += 1,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn prepare_bundle(cfg: &RunConfig) -> Result<DatasetBundle> {
    let interactions = cfg.require(&cfg.interactions, "interactions")?;
    let items = cfg.require(&cfg.items, "items")?;
    let columns = ColumnMap {
        user: cfg.user_col.clone(),
        item: cfg.item_col.clone(),
        rating: cfg.ratings.then(|| cfg.rating_col.clone()),
        timestamp: cfg.timestamp_col.clone(),
    };
    let format = cfg.format.unwrap_or_else(|| Delimited::from_path(interactions));
    let raw = load_interactions(interactions, format, &columns, cfg.max_malformed)?;
    let filters = FilterConfig {
        rating_threshold: cfg.ratings.then_some(cfg.rating_threshold),
        min_user_interactions: cfg.min_user_interactions,
    };
    let (x, mut stages) = implicitize(&raw, &filters)?;
    let texts = load_texts(items, TextFormat::from_path(items))?;
    let (x, corpus, more) = join_texts(&x, &texts, cfg.min_user_interactions)?;
    stages.extend(more);
    let mut filter_json = serde_json::to_value(filters).expect("filters serialize");
    filter_json["malformed_lines"] = raw.malformed.len().into();
    DatasetBundle::new(
        x,
        corpus,
        vec![interactions.display().to_string(), items.display().to_string()],
        filter_json,
        stages,
    )
}

fn load_dataset(cfg: &RunConfig) -> Result<DatasetBundle> {
    match &cfg.bundle {
        Some(dir) => DatasetBundle::load(dir),
        None if cfg.interactions.is_some() => prepare_bundle(cfg),
        None => Err(Error::Config("--bundle or --interactions/--items is required".into())),
    }
}

fn cmd_prepare(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let bundle = prepare_bundle(cfg)?;
    bundle.save(dir)?;
    log::info!(
        "{} users, {} items, {} interactions",
        bundle.metadata.n_users,
        bundle.metadata.n_items,
        bundle.metadata.n_interactions
    );
    Ok(())
}

/// Item hold-out of a run: the test split and, when a validation fraction is
/// set, the training items left after carving out validation items.
fn item_split(cfg: &RunConfig, x: &InteractionMatrix) -> Result<(ItemSplit, Option<ItemSplit>)> {
    let split = split_items(x, cfg.n_test_items, cfg.seed)?;
    let validation = if cfg.validation_fraction > 0.0 {
        Some(split.carve_validation(cfg.validation_fraction, cfg.seed)?)
    } else {
        None
    };
    Ok((split, validation))
}

fn cmd_train(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let (x, corpus) = match cfg.split {
        SplitKind::None => (ds.interactions.clone(), ds.corpus.clone()),
        SplitKind::Item => {
            let (split, validation) = item_split(cfg, &ds.interactions)?;
            let train_items = validation.map_or(split.train_items, |v| v.train_items);
            (
                ds.interactions.restrict_items(&train_items)?,
                ds.corpus.subset(&train_items)?,
            )
        }
        SplitKind::Time => {
            let split = split_time(&ds.interactions, cfg.test_fraction)?;
            (split.train_matrix(&ds.interactions)?, ds.corpus.clone())
        }
    };

    let (encoder, report): (Box<dyn ItemEncoder>, _) = match cfg.mode {
        Mode::Elsa => {
            let elsa = ElsaConfig {
                d: cfg.dim,
                epochs: cfg.epochs,
                batch_users: cfg.batch_users,
                lr: cfg.lr,
                seed: cfg.seed,
                normalize_a: cfg.normalize_a,
            };
            let (model, report) = train_elsa(&x, &elsa)?;
            (Box::new(EmbeddingTable::from_matrix(model.a)), report)
        }
        Mode::Beeformer => {
            let spec = EncoderSpec {
                kind: cfg.encoder,
                dim: cfg.dim,
                hash_bits: matches!(cfg.encoder, EncoderKind::BowLinear | EncoderKind::BowMlp)
                    .then_some(cfg.hash_bits),
                hidden: (cfg.encoder == EncoderKind::BowMlp).then_some(cfg.hidden),
                bias: cfg.bias,
                frozen_path: cfg.frozen.clone(),
            };
            let mut enc = build_encoder(&spec, &corpus, cfg.seed)?;
            let tc = TrainConfig {
                m: cfg.m.unwrap_or(x.n_items().min(1024)),
                batch_users: cfg.batch_users,
                epochs: cfg.epochs,
                lr: cfg.lr,
                item_chunk_size: cfg.chunk_size,
                seed: cfg.seed,
                normalize_a: cfg.normalize_a,
            };
            let report = train(enc.as_mut(), &x, &tc)?;
            (enc, report)
        }
    };
    let meta = CheckpointMeta {
        encoder: encoder.spec(),
        item_ids: x.item_ids().to_vec(),
        normalize_a: cfg.normalize_a,
    };
    save_checkpoint(encoder.as_ref(), &meta, &dir.join("checkpoint.bin"))?;
    report.write_loss_log(&dir.join("losses.tsv"))?;
    report.write_step_log(&dir.join("train_log.jsonl"))?;
    report.write_summary(&dir.join("summary.json"))?;
    if let Some(last) = report.epochs.last() {
        log::info!("final epoch mean loss {:.6}", last.mean_loss);
    }
    Ok(())
}

/// Embeddings of every catalog item, normalized when the checkpoint was
/// trained with a normalized decoder.
fn embed_catalog(path: &Path, ds: &DatasetBundle, chunk: usize) -> Result<EmbeddingMatrix> {
    if chunk == 0 {
        return Err(Error::Config("--chunk-size must be at least 1".into()));
    }
    let (enc, meta) = load_checkpoint(path, &ds.corpus)?;
    let all: Vec<usize> = (0..ds.corpus.len()).collect();
    let blocks = all
        .chunks(chunk)
        .map(|c| enc.encode(c))
        .collect::<Result<Vec<_>>>()?;
    let a = DenseMatrix::vstack(&blocks)?;
    let emb = EmbeddingMatrix {
        a: ElsaObjective::new(meta.normalize_a).effective_a(&a),
        item_ids: ds.corpus.item_ids().to_vec(),
        normalized: meta.normalize_a,
    };
    Ok(emb)
}

fn cmd_embed(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let checkpoint = cfg.require(&cfg.checkpoint, "checkpoint")?;
    let emb = embed_catalog(checkpoint, &ds, cfg.chunk_size)?;
    dataio::export_embeddings(&emb, &dir.join("embeddings.bin"), cfg.precision)
}

fn embeddings_for(cfg: &RunConfig, ds: &DatasetBundle) -> Result<EmbeddingMatrix> {
    if let Some(path) = &cfg.embeddings {
        dataio::import_embeddings_for(path, ds.interactions.item_ids())
    } else if let Some(path) = &cfg.checkpoint {
        embed_catalog(path, ds, cfg.chunk_size)
    } else {
        Err(Error::Config("--embeddings or --checkpoint is required".into()))
    }
}

fn cmd_evaluate(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let x = &ds.interactions;
    // interactions a model may have seen, in the full catalog's column space
    let (task, visible) = match cfg.split {
        SplitKind::None => {
            return Err(Error::Config("evaluate needs --split item or --split time".into()))
        }
        SplitKind::Item => {
            let (split, validation) = item_split(cfg, x)?;
            let split = match (cfg.eval_on, validation) {
                (EvalOn::Test, _) => split,
                (EvalOn::Validation, Some(v)) => v,
                (EvalOn::Validation, None) => {
                    return Err(Error::Config(
                        "--eval-on validation needs --validation-fraction > 0".into(),
                    ))
                }
            };
            let mut train = vec![false; x.n_items()];
            split.train_items.iter().for_each(|&i| train[i] = true);
            let seen: Vec<_> = x.interactions().into_iter().filter(|it| train[it.item]).collect();
            (EvalTask::item_split(x, &split)?, x.with_interactions(&seen)?)
        }
        SplitKind::Time => {
            let split = split_time(x, cfg.test_fraction)?;
            (EvalTask::time_split(x, &split)?, split.train_matrix(x)?)
        }
    };
    let scorer: Box<dyn Scorer> = match cfg.scorer {
        ScorerKind::Cbf => Box::new(CbfScorer {
            embeddings: embeddings_for(cfg, &ds)?,
        }),
        ScorerKind::Elsa => Box::new(ElsaScorer {
            embeddings: embeddings_for(cfg, &ds)?,
        }),
        // cold-start items have no training interactions; rank them by
        // their overall interaction counts instead
        ScorerKind::Popularity if cfg.split == SplitKind::Item => {
            Box::new(PopularityScorer::from_matrix(x))
        }
        ScorerKind::Popularity => Box::new(PopularityScorer::from_matrix(&visible)),
        ScorerKind::Random => Box::new(RandomScorer { seed: cfg.seed }),
        ScorerKind::ItemKnn => Box::new(ItemKnnScorer::new(&visible)),
        ScorerKind::Oracle => Box::new(OracleScorer::new(&task.users, &task.targets)),
    };
    let opts = EvalOptions {
        ks: cfg.k.clone(),
        recall_denominator: cfg.recall_denominator,
        bootstrap: cfg.bootstrap,
        seed: cfg.seed,
        ..EvalOptions::default()
    };
    let mut report = evaluate(scorer.as_ref(), &task, cfg.scenario, &opts)?;
    report.config = serde_json::to_value(cfg).expect("config serializes");
    write_text(&dir.join("report.json"), &(report.to_json() + "\n"))?;
    let table = report.to_table();
    write_text(&dir.join("report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

#[derive(serde::Serialize)]
struct Recommendation<'a> {
    user_id: &'a str,
    items: Vec<&'a str>,
    scores: Vec<f64>,
}

fn cmd_recommend(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let x = &ds.interactions;
    let k = *cfg
        .k
        .first()
        .ok_or_else(|| Error::Config("--k needs a value".into()))?;
    let users: Vec<usize> = match &cfg.users {
        Some(ids) => {
            let index: std::collections::HashMap<&str, usize> =
                x.user_ids().iter().enumerate().map(|(u, s)| (s.as_str(), u)).collect();
            ids.iter()
                .map(|id| {
                    index
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::Data(format!("unknown user {id:?}")))
                })
                .collect::<Result<_>>()?
        }
        None => (0..x.n_users()).collect(),
    };
    let scorer: Box<dyn Scorer> = match cfg.scorer {
        ScorerKind::Cbf => Box::new(CbfScorer {
            embeddings: embeddings_for(cfg, &ds)?,
        }),
        ScorerKind::Elsa => Box::new(ElsaScorer {
            embeddings: embeddings_for(cfg, &ds)?,
        }),
        ScorerKind::Popularity => Box::new(PopularityScorer::from_matrix(x)),
        ScorerKind::Random => Box::new(RandomScorer { seed: cfg.seed }),
        ScorerKind::ItemKnn => Box::new(ItemKnnScorer::new(x)),
        ScorerKind::Oracle => {
            return Err(Error::Config("the oracle scorer only applies to evaluate".into()))
        }
    };
    let path = dir.join("recommendations.jsonl");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    let all: Vec<usize> = (0..x.n_items()).collect();
    for block in users.chunks(256) {
        let inputs = x.gather(block, &all)?;
        let scores = scorer.score(block, &inputs, None)?;
        for (&u, list) in block.iter().zip(top_k_among(&scores, None, &inputs, k, true)?) {
            let rec = Recommendation {
                user_id: &x.user_ids()[u],
                items: list.items.iter().map(|&(i, _)| x.item_ids()[i].as_str()).collect(),
                scores: list.items.iter().map(|&(_, s)| s).collect(),
            };
            let line = serde_json::to_string(&rec).expect("recommendation serializes");
            writeln!(w, "{line}").map_err(|e| Error::io(&path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))
}
