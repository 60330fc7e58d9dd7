use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{Interaction, InteractionMatrix};

/// Disjoint train/test item sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemSplit {
    pub train_items: Vec<usize>,
    pub test_items: Vec<usize>,
    pub seed: u64,
}

/// `⌈fraction · n⌉`, robust to representation error in `fraction`.
pub(crate) fn ceil_share(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Holds out `n_test` items chosen uniformly at random.
pub fn split_items(x: &InteractionMatrix, n_test: usize, seed: u64) -> Result<ItemSplit> {
    let n = x.n_items();
    if n_test >= n {
        return Err(Error::Config(format!(
            "n_test must be below the number of items ({n}), got {n_test}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_items = sample(&mut rng, n, n_test).into_vec();
    test_items.sort_unstable();
    let mut is_test = vec![false; n];
    test_items.iter().for_each(|&i| is_test[i] = true);
    Ok(ItemSplit {
        train_items: (0..n).filter(|&i| !is_test[i]).collect(),
        test_items,
        seed,
    })
}

impl ItemSplit {
    /// Carves `⌈fraction · |train|⌉` validation items out of the training
    /// items. The result uses them as its test set.
    pub fn carve_validation(&self, fraction: f64, seed: u64) -> Result<ItemSplit> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::Config(format!(
                "validation fraction must be in [0, 1), got {fraction}"
            )));
        }
        let n_val = ceil_share(fraction, self.train_items.len());
        if n_val >= self.train_items.len() {
            return Err(Error::Config("validation would consume every training item".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = sample(&mut rng, self.train_items.len(), n_val).into_vec();
        picked.sort_unstable();
        let mut is_val = vec![false; self.train_items.len()];
        picked.iter().for_each(|&k| is_val[k] = true);
        Ok(ItemSplit {
            train_items: self
                .train_items
                .iter()
                .zip(&is_val)
                .filter(|(_, &v)| !v)
                .map(|(&i, _)| i)
                .collect(),
            test_items: picked.iter().map(|&k| self.train_items[k]).collect(),
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSplit {
    pub train: Vec<Interaction>,
    pub test: Vec<Interaction>,
    /// Train timestamps are `≤ boundary`, test timestamps `≥ boundary`.
    pub boundary: i64,
}

impl TimeSplit {
    pub fn train_matrix(&self, x: &InteractionMatrix) -> Result<InteractionMatrix> {
        x.with_interactions(&self.train)
    }

    pub fn test_matrix(&self, x: &InteractionMatrix) -> Result<InteractionMatrix> {
        x.with_interactions(&self.test)
    }
}

/// Sends the chronologically last `⌈fraction · N⌉` interactions to test.
/// Equal timestamps keep storage order (user-major, item ascending).
pub fn split_time(x: &InteractionMatrix, fraction: f64) -> Result<TimeSplit> {
    if !x.has_timestamps() {
        return Err(Error::Data("time split needs timestamps".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must be in (0, 1), got {fraction}"
        )));
    }
    let mut all = x.interactions();
    if all.is_empty() {
        return Err(Error::Data("interaction matrix is empty".into()));
    }
    all.sort_by_key(|it| it.timestamp);
    let n_test = ceil_share(fraction, all.len());
    let test = all.split_off(all.len() - n_test);
    let boundary = test
        .first()
        .or(all.last())
        .and_then(|it| it.timestamp)
        .expect("timestamps present");
    Ok(TimeSplit {
        train: all,
        test,
        boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn timed(ts: &[i64]) -> InteractionMatrix {
        let n = ts.len();
        let interactions: Vec<Interaction> = ts
            .iter()
            .enumerate()
            .map(|(k, &t)| Interaction {
                user: k / 5,
                item: k % 5,
                timestamp: Some(t),
            })
            .collect();
        InteractionMatrix::from_interactions(
            (0..n.div_ceil(5)).map(|u| format!("u{u}")).collect(),
            (0..5).map(|i| format!("i{i}")).collect(),
            &interactions,
        )
        .unwrap()
    }

    #[test]
    fn item_split_basics() {
        let x = InteractionMatrix::from_user_rows(10, &[vec![0, 1]]).unwrap();
        let s = split_items(&x, 9, 0).unwrap();
        assert_eq!(s.train_items.len(), 1);
        assert!(split_items(&x, 10, 0).is_err());
        assert_eq!(split_items(&x, 4, 7).unwrap(), split_items(&x, 4, 7).unwrap());
        let differs = (1..20).any(|s| split_items(&x, 4, s).unwrap().test_items != split_items(&x, 4, 0).unwrap().test_items);
        assert!(differs);
    }

    #[test]
    fn validation_carve_stays_inside_train() {
        let x = InteractionMatrix::from_user_rows(50, &[vec![0]]).unwrap();
        let s = split_items(&x, 10, 3).unwrap();
        let v = s.carve_validation(0.1, 4).unwrap();
        assert_eq!(v.test_items.len(), 4);
        assert_eq!(v.train_items.len(), 36);
        assert!(v.test_items.iter().all(|i| s.train_items.contains(i)));
        assert!(v.test_items.iter().all(|i| !v.train_items.contains(i)));
        assert!(s.carve_validation(1.0, 0).is_err());
    }

    #[test]
    fn distinct_timestamps_last_two_to_test() {
        let x = timed(&[10, 3, 7, 1, 9, 2, 8, 4, 6, 5]);
        let s = split_time(&x, 0.2).unwrap();
        let test_ts: Vec<i64> = s.test.iter().map(|i| i.timestamp.unwrap()).collect();
        assert_eq!(test_ts, vec![9, 10]);
        assert_eq!(s.train.len(), 8);
        assert_eq!(s.boundary, 9);
    }

    #[test]
    fn equal_timestamps_split_by_storage_order() {
        let x = timed(&[4; 10]);
        let s = split_time(&x, 0.2).unwrap();
        assert_eq!(s.train.len(), 8);
        assert_eq!((s.test[0].user, s.test[0].item), (1, 3));
        assert_eq!((s.test[1].user, s.test[1].item), (1, 4));
        assert_eq!(s.boundary, 4);
    }

    #[test]
    fn time_split_errors() {
        let x = InteractionMatrix::from_user_rows(3, &[vec![0]]).unwrap();
        assert!(matches!(split_time(&x, 0.2), Err(Error::Data(_))));
        let x = timed(&[1, 2]);
        assert!(split_time(&x, 0.0).is_err());
        assert!(split_time(&x, 1.0).is_err());
    }

    #[test]
    fn share_rounding() {
        assert_eq!(ceil_share(0.2, 10), 2);
        assert_eq!(ceil_share(0.2, 11), 3);
        assert_eq!(ceil_share(0.3, 10), 3);
        assert_eq!(ceil_share(0.1, 0), 0);
    }
}
