//! Encoder training through the ELSA decoder.
//!
//! One step runs in three phases so that only one item chunk is ever
//! differentiated at a time:
//!
//! 1. encode the batch items chunk by chunk, without keeping any state;
//! 2. evaluate the ELSA loss on the assembled `A` and keep `∂L/∂A`
//!    (the gradient checkpoint);
//! 3. re-encode chunk by chunk, pulling each slice of the checkpoint back
//!    to the parameters and summing, then apply one optimizer update.

pub mod report;
pub mod sampler;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::elsa::ElsaObjective;
use crate::encoders::ItemEncoder;
use crate::error::{ensure_dims, Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::sparse::InteractionMatrix;

pub use report::{EpochSummary, StepRecord, TrainReport};
pub use sampler::{epoch_user_order, sample_batch, SampledBatch, SamplerConfig};

/// Loss and accumulated parameter gradient of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGradients {
    pub loss: f64,
    pub grad: Vec<f64>,
}

fn chunk_ranges(len: usize, chunk: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..len).step_by(chunk).map(move |s| s..(s + chunk).min(len))
}

/// Phases 1–3 of a training step without the update.
pub fn step_gradients(
    enc: &dyn ItemEncoder,
    batch: &SampledBatch,
    objective: &ElsaObjective,
    item_chunk_size: usize,
) -> Result<StepGradients> {
    if item_chunk_size == 0 {
        return Err(Error::Config("item_chunk_size must be at least 1".into()));
    }
    let items = &batch.item_indices;
    ensure_dims("train_step columns", items.len(), batch.x_sub.n_cols())?;

    let blocks = chunk_ranges(items.len(), item_chunk_size)
        .map(|r| enc.encode(&items[r]))
        .collect::<Result<Vec<_>>>()?;
    let a = DenseMatrix::vstack(&blocks)?;
    drop(blocks);

    let (loss, checkpoint) = objective.loss_and_grad(&batch.x_sub, &a)?;

    let mut grad = vec![0.0; enc.n_params()];
    for r in chunk_ranges(items.len(), item_chunk_size) {
        let rows: Vec<usize> = r.clone().collect();
        let slice = checkpoint.select_rows(&rows)?;
        enc.accumulate_backward(&items[r], &slice, &mut grad)?;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("step loss {loss}")));
    }
    if let Some(k) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("parameter gradient entry {k}")));
    }
    Ok(StepGradients { loss, grad })
}

/// One optimizer update of the encoder on `batch`. Returns the loss
/// measured before the update.
pub fn train_step(
    enc: &mut dyn ItemEncoder,
    batch: &SampledBatch,
    optimizer: &mut Adam,
    objective: &ElsaObjective,
    item_chunk_size: usize,
) -> Result<f64> {
    let StepGradients { loss, grad } = step_gradients(enc, batch, objective, item_chunk_size)?;
    optimizer.step(enc.params_mut(), &grad)?;
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub m: usize,
    pub batch_users: usize,
    pub epochs: usize,
    pub lr: f64,
    pub item_chunk_size: usize,
    pub seed: u64,
    pub normalize_a: bool,
}

impl TrainConfig {
    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            m: self.m,
            batch_users: self.batch_users,
            seed: self.seed,
        }
    }
}

/// Runs `epochs × ⌈n_users / batch_users⌉` steps over seeded user shuffles.
pub fn train(
    enc: &mut dyn ItemEncoder,
    x: &InteractionMatrix,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    ensure_dims("train: encoder items", x.n_items(), enc.n_items())?;
    if cfg.epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    if cfg.item_chunk_size == 0 {
        return Err(Error::Config("item_chunk_size must be at least 1".into()));
    }
    let sampler = cfg.sampler();
    sampler.validate(x.n_items())?;
    let objective = ElsaObjective::new(cfg.normalize_a);
    let mut optimizer = Adam::new(AdamConfig::with_lr(cfg.lr), enc.n_params())?;
    let mut report = TrainReport::new(serde_json::to_value(cfg).unwrap_or_default());
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let order = epoch_user_order(x.n_users(), cfg.seed, epoch as u64);
        for users in order.chunks(cfg.batch_users) {
            let t0 = Instant::now();
            let batch = sample_batch(x, &sampler, users, step)?;
            let loss = train_step(enc, &batch, &mut optimizer, &objective, cfg.item_chunk_size)?;
            report.push_step(StepRecord {
                epoch,
                step,
                loss,
                seconds: t0.elapsed().as_secs_f64(),
            });
            log::debug!("epoch {epoch} step {step} loss {loss:.6}");
            step += 1;
        }
        report.close_epoch(epoch);
        log::info!(
            "epoch {epoch}: mean loss {:.6}",
            report.epochs.last().map_or(0.0, |e| e.mean_loss)
        );
    }
    Ok(report)
}
