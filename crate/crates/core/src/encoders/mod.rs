//! Differentiable item encoders `A = g(texts, θ)`.
//!
//! Every encoder exposes its parameters as one flat vector. The layout of
//! that vector is documented on each implementation and is what gets
//! written to checkpoints, so the optimizer and the finite-difference
//! checks never need to know which encoder they are driving.

mod bow;
pub mod features;
mod frozen;
mod table;

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bow::{BowLinear, BowMlp};
pub use features::{featurize, FeatureMatrix, ItemCorpus};
pub use frozen::FrozenPlusHead;
pub use table::EmbeddingTable;

use crate::dataio::matfile::{self, MatrixHeader, Precision};
use crate::dense::DenseMatrix;
use crate::error::{ensure_dims, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    Table,
    BowLinear,
    BowMlp,
    FrozenHead,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 4] = [
        EncoderKind::Table,
        EncoderKind::BowLinear,
        EncoderKind::BowMlp,
        EncoderKind::FrozenHead,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Table => "table",
            EncoderKind::BowLinear => "bow-linear",
            EncoderKind::BowMlp => "bow-mlp",
            EncoderKind::FrozenHead => "frozen-head",
        }
    }
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown encoder kind {s:?}")))
    }
}

pub trait ItemEncoder: Send + Sync {
    fn kind(&self) -> EncoderKind;

    /// Output embedding dimension.
    fn dim(&self) -> usize;

    /// Number of items the encoder can embed.
    fn n_items(&self) -> usize;

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    fn n_params(&self) -> usize {
        self.params().len()
    }

    /// Embeddings of the requested items, one row each.
    fn encode(&self, items: &[usize]) -> Result<DenseMatrix>;

    /// Adds `∂⟨grads, encode(items)⟩/∂θ` into `out`. Implementations recompute
    /// whatever forward state they need from the current parameters.
    fn accumulate_backward(&self, items: &[usize], grads: &DenseMatrix, out: &mut [f64])
        -> Result<()>;

    fn encode_backward(&self, items: &[usize], grads: &DenseMatrix) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_params()];
        self.accumulate_backward(items, grads, &mut out)?;
        Ok(out)
    }

    /// Hyperparameters needed to rebuild the encoder around a parameter vector.
    fn spec(&self) -> EncoderSpec;
}

pub(crate) fn check_items(items: &[usize], n_items: usize) -> Result<()> {
    match items.iter().find(|&&i| i >= n_items) {
        Some(&i) => Err(Error::IndexOutOfRange {
            what: "encoder items",
            index: i,
            len: n_items,
        }),
        None => Ok(()),
    }
}

pub(crate) fn check_backward_shapes(
    items: &[usize],
    grads: &DenseMatrix,
    dim: usize,
    out: &[f64],
    n_params: usize,
) -> Result<()> {
    ensure_dims("encode_backward rows", items.len(), grads.n_rows())?;
    ensure_dims("encode_backward cols", dim, grads.n_cols())?;
    ensure_dims("encode_backward params", n_params, out.len())
}

/// Fills `out` segment by segment; each segment is uniform(−1/√fan_in, 1/√fan_in).
pub(crate) fn init_segments(rng: &mut ChaCha8Rng, out: &mut Vec<f64>, segments: &[(usize, usize)]) {
    for &(len, fan_in) in segments {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        out.extend((0..len).map(|_| rng.gen_range(-bound..bound)));
    }
}

pub(crate) fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Serializable description of an encoder (everything except θ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub dim: usize,
    #[serde(default)]
    pub hash_bits: Option<u32>,
    #[serde(default)]
    pub hidden: Option<usize>,
    #[serde(default)]
    pub bias: bool,
    /// Embedding file feeding a frozen-head encoder.
    #[serde(default)]
    pub frozen_path: Option<PathBuf>,
}

impl EncoderSpec {
    pub fn new(kind: EncoderKind, dim: usize) -> Self {
        Self {
            kind,
            dim,
            hash_bits: None,
            hidden: None,
            bias: false,
            frozen_path: None,
        }
    }
}

/// Builds a freshly initialized encoder for `corpus`.
pub fn build_encoder(
    spec: &EncoderSpec,
    corpus: &ItemCorpus,
    seed: u64,
) -> Result<Box<dyn ItemEncoder>> {
    if spec.dim == 0 {
        return Err(Error::Config("embedding dimension must be at least 1".into()));
    }
    let hash_bits = || {
        spec.hash_bits
            .ok_or_else(|| Error::Config(format!("{} encoder needs hash_bits", spec.kind)))
    };
    Ok(match spec.kind {
        EncoderKind::Table => Box::new(EmbeddingTable::new(corpus.len(), spec.dim, seed)),
        EncoderKind::BowLinear => {
            let f = Arc::new(featurize(corpus, hash_bits()?)?);
            Box::new(BowLinear::new(f, spec.dim, spec.bias, seed))
        }
        EncoderKind::BowMlp => {
            let f = Arc::new(featurize(corpus, hash_bits()?)?);
            let hidden = spec
                .hidden
                .ok_or_else(|| Error::Config("bow-mlp encoder needs a hidden width".into()))?;
            if hidden == 0 {
                return Err(Error::Config("hidden width must be at least 1".into()));
            }
            Box::new(BowMlp::new(f, hidden, spec.dim, seed))
        }
        EncoderKind::FrozenHead => {
            let path = spec
                .frozen_path
                .as_ref()
                .ok_or_else(|| Error::Config("frozen-head encoder needs an embedding file".into()))?;
            let frozen = frozen::load_aligned(path, corpus.item_ids())?;
            Box::new(FrozenPlusHead::new(frozen, spec.dim, spec.bias, seed).with_source(path))
        }
    })
}

/// Checkpoint metadata stored next to θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub encoder: EncoderSpec,
    /// Items the encoder was trained on.
    pub item_ids: Vec<String>,
    pub normalize_a: bool,
}

pub fn save_checkpoint(enc: &dyn ItemEncoder, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let header = MatrixHeader::new(
        matfile::KIND_CHECKPOINT,
        1,
        enc.n_params(),
        Precision::F64,
        Vec::new(),
        false,
    )
    .with_extra(serde_json::to_value(meta).expect("checkpoint meta serializes"));
    matfile::write(path, &header, enc.params())
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointMeta, Vec<f64>)> {
    let (header, params) = matfile::read(path)?;
    if header.kind != matfile::KIND_CHECKPOINT {
        return Err(Error::corrupt(
            path,
            format!("expected an encoder checkpoint, found {}", header.kind),
        ));
    }
    let meta: CheckpointMeta = serde_json::from_value(header.extra)
        .map_err(|e| Error::corrupt(path, format!("checkpoint metadata: {e}")))?;
    Ok((meta, params))
}

/// Rebuilds a trained encoder over `corpus`. Text encoders transfer to any
/// corpus; table encoders require the training catalog.
pub fn load_checkpoint(path: &Path, corpus: &ItemCorpus) -> Result<(Box<dyn ItemEncoder>, CheckpointMeta)> {
    let (meta, params) = read_checkpoint(path)?;
    if meta.encoder.kind == EncoderKind::Table && meta.item_ids != corpus.item_ids() {
        return Err(Error::Data(
            "table checkpoint was trained on a different item catalog".into(),
        ));
    }
    let mut enc = build_encoder(&meta.encoder, corpus, 0)?;
    if enc.n_params() != params.len() {
        return Err(Error::corrupt(
            path,
            format!(
                "checkpoint has {} parameters, encoder expects {}",
                params.len(),
                enc.n_params()
            ),
        ));
    }
    enc.params_mut().copy_from_slice(&params);
    Ok((enc, meta))
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn corpus(n: usize) -> ItemCorpus {
        let words = ["alpha", "beta", "gamma", "delta", "omega", "sigma", "kappa"];
        ItemCorpus::new(
            (0..n).map(|i| format!("i{i}")).collect(),
            (0..n)
                .map(|i| {
                    if i == 3 {
                        String::new()
                    } else {
                        format!("{} {} {}", words[i % 7], words[(i * 3) % 7], words[(i + 2) % 5])
                    }
                })
                .collect(),
        )
        .unwrap()
    }

    pub fn random_grads(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    /// ⟨G, encode(items)⟩ as a function of θ.
    pub fn inner(enc: &dyn ItemEncoder, items: &[usize], g: &DenseMatrix) -> f64 {
        let a = enc.encode(items).unwrap();
        crate::dense::dot(a.as_slice(), g.as_slice())
    }

    pub fn frozen_file(dir: &Path, n_items: usize, e: usize, seed: u64) -> PathBuf {
        let mut rng = seeded(seed);
        let data: Vec<f64> = (0..n_items * e).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let path = dir.join("frozen.bin");
        let header = MatrixHeader::new(
            matfile::KIND_EMBEDDINGS,
            n_items,
            e,
            Precision::F64,
            (0..n_items).map(|i| format!("i{i}")).collect(),
            false,
        );
        matfile::write(&path, &header, &data).unwrap();
        path
    }

    pub fn all_encoders(dir: &Path, n_items: usize, dim: usize, seed: u64) -> Vec<Box<dyn ItemEncoder>> {
        let c = corpus(n_items);
        let frozen = frozen_file(dir, n_items, 6, seed ^ 0xfeed);
        EncoderKind::ALL
            .iter()
            .map(|&kind| {
                let spec = EncoderSpec {
                    kind,
                    dim,
                    hash_bits: Some(8),
                    hidden: Some(5),
                    bias: true,
                    frozen_path: Some(frozen.clone()),
                };
                build_encoder(&spec, &c, seed).unwrap()
            })
            .collect()
    }
}
