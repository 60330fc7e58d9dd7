//! Training item-text encoders through a sparse linear autoencoder.
//!
//! An encoder maps item texts to an item matrix `A`; the ELSA loss on
//! user–item interactions supplies `∂L/∂A`, which is pulled back to the
//! encoder parameters chunk by chunk so that memory stays bounded by the
//! number of sampled items per step.

pub mod cli;
pub mod dataio;
pub mod dense;
pub mod elsa;
pub mod encoders;
pub mod error;
pub mod evalkit;
pub mod optim;
pub mod recsys;
pub mod sparse;
pub mod training;

pub use dense::DenseMatrix;
pub use elsa::{train_elsa, ElsaConfig, ElsaModel, ElsaObjective};
pub use encoders::{build_encoder, EncoderKind, EncoderSpec, ItemCorpus, ItemEncoder};
pub use error::{Error, Result};
pub use recsys::{EmbeddingMatrix, RankedList};
pub use sparse::{CsrMatrix, InteractionMatrix};
pub use training::{train, train_step, TrainConfig, TrainReport};
