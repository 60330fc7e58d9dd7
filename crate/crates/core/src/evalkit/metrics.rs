use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecallDenominator {
    /// `min(K, |relevant|)`
    #[default]
    Calibrated,
    /// `|relevant|`
    Full,
}

impl FromStr for RecallDenominator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "calibrated" => Ok(Self::Calibrated),
            "full" => Ok(Self::Full),
            _ => Err(Error::Config(format!("unknown recall denominator {s:?}"))),
        }
    }
}

/// `relevant` must be sorted. Returns 0 when nothing is relevant.
pub fn recall_at_k(
    ranked: &[usize],
    relevant: &[usize],
    k: usize,
    denominator: RecallDenominator,
) -> f64 {
    if relevant.is_empty() || k == 0 {
        return 0.0;
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|i| relevant.binary_search(i).is_ok())
        .count();
    let denom = match denominator {
        RecallDenominator::Calibrated => k.min(relevant.len()),
        RecallDenominator::Full => relevant.len(),
    };
    hits as f64 / denom as f64
}

/// Binary-relevance NDCG with `log2` discounts. `relevant` must be sorted.
pub fn ndcg_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> f64 {
    if relevant.is_empty() || k == 0 {
        return 0.0;
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.binary_search(i).is_ok())
        .map(|(r, _)| 1.0 / (r as f64 + 2.0).log2())
        .sum();
    let idcg: f64 = (0..k.min(relevant.len()))
        .map(|r| 1.0 / (r as f64 + 2.0).log2())
        .sum();
    dcg / idcg
}

/// Standard deviation of `b` means of user-resampled values.
pub fn bootstrap_se(values: &[f64], b: usize, seed: u64) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Data(format!(
            "bootstrap needs at least 2 users, got {}",
            values.len()
        )));
    }
    if b < 2 {
        return Err(Error::Config("bootstrap needs at least 2 resamples".into()));
    }
    let n = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<f64> = (0..b)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    let mu = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / b as f64;
    Ok(var.sqrt())
}
