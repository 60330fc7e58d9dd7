use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::matfile::Precision;
use crate::dataio::Delimited;
use crate::encoders::EncoderKind;
use crate::error::{Error, Result};
use crate::evalkit::{RecallDenominator, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Beeformer,
    Elsa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitKind {
    None,
    Item,
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    Cbf,
    Elsa,
    Popularity,
    Random,
    ItemKnn,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalOn {
    Test,
    Validation,
}

/// Every setting of every command. Keys in a `--config` TOML file use
/// the flag names, e.g. `batch-users = 64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct RunConfig {
    pub interactions: Option<PathBuf>,
    pub items: Option<PathBuf>,
    pub bundle: Option<PathBuf>,
    pub format: Option<Delimited>,
    pub user_col: String,
    pub item_col: String,
    pub rating_col: String,
    pub timestamp_col: Option<String>,
    /// Whether ratings are read and thresholded.
    pub ratings: bool,
    pub rating_threshold: f64,
    pub min_user_interactions: usize,
    pub max_malformed: f64,

    pub mode: Mode,
    pub encoder: EncoderKind,
    pub dim: usize,
    pub hash_bits: u32,
    pub hidden: usize,
    pub bias: bool,
    pub frozen: Option<PathBuf>,
    /// Items per step; unset means `min(1024, n_items)`.
    pub m: Option<usize>,
    pub batch_users: usize,
    pub epochs: usize,
    pub lr: f64,
    pub chunk_size: usize,
    pub seed: u64,
    pub normalize_a: bool,

    pub split: SplitKind,
    pub n_test_items: usize,
    pub test_fraction: f64,
    pub validation_fraction: f64,
    pub eval_on: EvalOn,
    pub scenario: Scenario,
    pub scorer: ScorerKind,
    pub k: Vec<usize>,
    pub bootstrap: usize,
    pub recall_denominator: RecallDenominator,

    pub checkpoint: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub precision: Precision,
    pub users: Option<Vec<String>>,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            interactions: None,
            items: None,
            bundle: None,
            format: None,
            user_col: "user_id".into(),
            item_col: "item_id".into(),
            rating_col: "rating".into(),
            timestamp_col: None,
            ratings: true,
            rating_threshold: 4.0,
            min_user_interactions: 5,
            max_malformed: 0.01,
            mode: Mode::Beeformer,
            encoder: EncoderKind::BowLinear,
            dim: 64,
            hash_bits: 18,
            hidden: 256,
            bias: false,
            frozen: None,
            m: None,
            batch_users: 128,
            epochs: 5,
            lr: 1e-3,
            chunk_size: 256,
            seed: 0,
            normalize_a: true,
            split: SplitKind::None,
            n_test_items: 2000,
            test_fraction: 0.2,
            validation_fraction: 0.1,
            eval_on: EvalOn::Test,
            scenario: Scenario::ColdStart,
            scorer: ScorerKind::Cbf,
            k: vec![20, 50, 100],
            bootstrap: 1000,
            recall_denominator: RecallDenominator::Calibrated,
            checkpoint: None,
            embeddings: None,
            precision: Precision::F64,
            users: None,
            out: PathBuf::from("runs"),
            threads: None,
        }
    }
}

/// Command-line overrides; unset flags leave the file or default value.
#[derive(Debug, Clone, Default, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Flags {
    /// TOML file with default settings (flag names as keys)
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Raw interaction file (csv or tsv)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interactions: Option<PathBuf>,
    /// Item texts (csv with item_id,text or jsonl)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub items: Option<PathBuf>,
    /// Prepared dataset directory
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bundle: Option<PathBuf>,
    /// Interaction file format [csv, tsv]; guessed from the extension
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub user_col: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item_col: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rating_col: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp_col: Option<String>,
    /// Read and threshold ratings
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratings: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rating_threshold: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_user_interactions: Option<usize>,
    /// Tolerated fraction of malformed lines
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_malformed: Option<f64>,

    /// Training mode [beeformer, elsa]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    /// Item encoder [table, bow-linear, bow-mlp, frozen-head]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub encoder: Option<String>,
    /// Embedding dimension
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Feature hashing bits (8..=24)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hash_bits: Option<u32>,
    /// Hidden width of bow-mlp
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    /// Trainable bias on linear encoders
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias: Option<bool>,
    /// Embedding file for frozen-head
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frozen: Option<PathBuf>,
    /// Items per training step
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_users: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    /// Items encoded per chunk
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chunk_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Row-normalize A inside the loss
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalize_a: Option<bool>,

    /// Hold-out [none, item, time]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_test_items: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_fraction: Option<f64>,
    /// Evaluate on [test, validation] items
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_on: Option<String>,
    /// [zero-shot, cold-start, supervised]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    /// [cbf, elsa, popularity, random, item-knn, oracle]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scorer: Option<String>,
    /// Cutoffs, comma separated
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<usize>>,
    /// Bootstrap resamples
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<usize>,
    /// [calibrated, full]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_denominator: Option<String>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    /// Stored float width [f32, f64]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<String>,
    /// Recommend only for these user ids, comma separated
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub users: Option<Vec<String>>,
    /// Parent directory of run directories
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Worker threads
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

fn overlay(base: &mut serde_json::Value, top: serde_json::Value) {
    if let (Some(b), serde_json::Value::Object(t)) = (base.as_object_mut(), top) {
        for (k, v) in t {
            b.insert(k, v);
        }
    }
}

impl RunConfig {
    /// Defaults, then the `--config` file, then explicit flags.
    pub fn resolve(flags: &Flags) -> Result<Self> {
        let mut merged = serde_json::to_value(RunConfig::default()).expect("config serializes");
        if let Some(path) = &flags.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let table: toml::Table = toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
            overlay(&mut merged, serde_json::to_value(table).expect("toml converts"));
        }
        overlay(&mut merged, serde_json::to_value(flags).expect("flags serialize"));
        serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))
    }

    /// First 12 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash12(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::Config(format!("--{flag} is required")))
    }
}
