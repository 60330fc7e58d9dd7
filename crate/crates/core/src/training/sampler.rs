//! User batching and negative item sampling.
//!
//! A step sees the items its users interacted with plus uniformly drawn
//! negatives, always `m` columns in total, so the per-step cost depends
//! on `m` and not on the catalog size.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, InteractionMatrix};

const USER_STREAM_SALT: u64 = 0x5851_f42d_4c95_7f2d;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Total item columns per step.
    pub m: usize,
    pub batch_users: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn validate(&self, n_items: usize) -> Result<()> {
        if self.m == 0 || self.m > n_items {
            return Err(Error::Config(format!(
                "m must be in 1..={n_items}, got {}",
                self.m
            )));
        }
        if self.batch_users == 0 {
            return Err(Error::Config("batch_users must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    pub user_indices: Vec<usize>,
    /// Sorted, unique, exactly `m` long.
    pub item_indices: Vec<usize>,
    /// Users × `item_indices`; columns of negatives are empty.
    pub x_sub: CsrMatrix,
    /// Number of items with at least one interaction in the batch.
    pub n_positive: usize,
}

/// Seeded permutation of all users for one epoch.
pub fn epoch_user_order(n_users: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ USER_STREAM_SALT);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n_users).collect();
    order.shuffle(&mut rng);
    order
}

/// Builds the training batch for `users`; the negatives are a pure function
/// of `(cfg.seed, step)`.
pub fn sample_batch(
    x: &InteractionMatrix,
    cfg: &SamplerConfig,
    users: &[usize],
    step: u64,
) -> Result<SampledBatch> {
    cfg.validate(x.n_items())?;
    let mut positives: HashSet<usize> = HashSet::new();
    for &u in users {
        if u >= x.n_users() {
            return Err(Error::IndexOutOfRange {
                what: "users",
                index: u,
                len: x.n_users(),
            });
        }
        positives.extend(x.user_items(u).iter().copied());
    }
    if positives.len() > cfg.m {
        return Err(Error::BatchTooLarge {
            batch_items: positives.len(),
            m: cfg.m,
        });
    }
    let n_positive = positives.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(step);
    let negatives = sample_negatives(&mut rng, x.n_items(), &positives, cfg.m - n_positive);

    let mut item_indices: Vec<usize> = positives.into_iter().chain(negatives).collect();
    item_indices.sort_unstable();
    let x_sub = x.gather(users, &item_indices)?;
    Ok(SampledBatch {
        user_indices: users.to_vec(),
        item_indices,
        x_sub,
        n_positive,
    })
}

/// `k` distinct items drawn uniformly from the complement of `excluded`.
fn sample_negatives(
    rng: &mut ChaCha8Rng,
    n_items: usize,
    excluded: &HashSet<usize>,
    k: usize,
) -> Vec<usize> {
    let pool = n_items - excluded.len();
    if k == 0 {
        return Vec::new();
    }
    if 2 * k > pool {
        // dense regime: partial shuffle of the explicit complement
        let mut complement: Vec<usize> = (0..n_items).filter(|i| !excluded.contains(i)).collect();
        let (chosen, _) = complement.partial_shuffle(rng, k);
        return chosen.to_vec();
    }
    // sparse regime: rejection keeps the cost proportional to k
    let mut chosen = HashSet::with_capacity(k);
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let i = rng.gen_range(0..n_items);
        if !excluded.contains(&i) && chosen.insert(i) {
            out.push(i);
        }
    }
    out
}
