//! Scoring models compared by [`evaluate`](super::evaluate).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::DenseMatrix;
use crate::error::{ensure_dims, Result};
use crate::recsys::{score_cbf, score_elsa, EmbeddingMatrix};
use crate::sparse::{CsrMatrix, InteractionMatrix};

/// Scores users against candidate items.
pub trait Scorer: Sync {
    fn name(&self) -> String;

    /// `users` are the original user indices of the rows of `inputs`;
    /// `inputs` spans the full catalog. Column `c` of the result belongs to
    /// `candidates[c]`, or to item `c` when `candidates` is `None`.
    fn score(
        &self,
        users: &[usize],
        inputs: &CsrMatrix,
        candidates: Option<&[usize]>,
    ) -> Result<DenseMatrix>;
}

fn select_columns(full: DenseMatrix, candidates: Option<&[usize]>) -> DenseMatrix {
    let Some(cands) = candidates else { return full };
    let mut out = DenseMatrix::zeros(full.n_rows(), cands.len());
    for r in 0..full.n_rows() {
        let src = full.row(r);
        for (o, &c) in out.row_mut(r).iter_mut().zip(cands) {
            *o = src[c];
        }
    }
    out
}

fn all_items(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Sum of cosine similarities to the user's items.
pub struct CbfScorer {
    pub embeddings: EmbeddingMatrix,
}

impl Scorer for CbfScorer {
    fn name(&self) -> String {
        "cbf".into()
    }

    fn score(&self, _: &[usize], inputs: &CsrMatrix, candidates: Option<&[usize]>) -> Result<DenseMatrix> {
        match candidates {
            Some(c) => score_cbf(inputs, &self.embeddings, c),
            None => score_cbf(inputs, &self.embeddings, &all_items(inputs.n_cols())),
        }
    }
}

/// `X·A·Aᵀ − X` with `A` as stored.
pub struct ElsaScorer {
    pub embeddings: EmbeddingMatrix,
}

impl Scorer for ElsaScorer {
    fn name(&self) -> String {
        "elsa".into()
    }

    fn score(&self, _: &[usize], inputs: &CsrMatrix, candidates: Option<&[usize]>) -> Result<DenseMatrix> {
        Ok(select_columns(score_elsa(inputs, &self.embeddings)?, candidates))
    }
}

/// Same score vector for every user.
pub struct PopularityScorer {
    pub counts: Vec<f64>,
}

impl PopularityScorer {
    pub fn from_matrix(x: &InteractionMatrix) -> Self {
        Self {
            counts: x.item_counts().into_iter().map(|c| c as f64).collect(),
        }
    }
}

impl Scorer for PopularityScorer {
    fn name(&self) -> String {
        "popularity".into()
    }

    fn score(&self, users: &[usize], inputs: &CsrMatrix, candidates: Option<&[usize]>) -> Result<DenseMatrix> {
        ensure_dims("popularity catalog", self.counts.len(), inputs.n_cols())?;
        let row: Vec<f64> = match candidates {
            Some(c) => c.iter().map(|&i| self.counts[i]).collect(),
            None => self.counts.clone(),
        };
        let data = row.iter().copied().cycle().take(row.len() * users.len()).collect();
        DenseMatrix::from_vec(users.len(), row.len(), data)
    }
}

/// Uniform random scores; each user draws from its own stream, so results
/// do not depend on how users are batched.
pub struct RandomScorer {
    pub seed: u64,
}

impl Scorer for RandomScorer {
    fn name(&self) -> String {
        "random".into()
    }

    fn score(&self, users: &[usize], inputs: &CsrMatrix, candidates: Option<&[usize]>) -> Result<DenseMatrix> {
        let n = candidates.map_or(inputs.n_cols(), <[usize]>::len);
        let mut out = DenseMatrix::zeros(users.len(), n);
        for (r, &u) in users.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(u as u64);
            out.row_mut(r).iter_mut().for_each(|v| *v = rng.gen());
        }
        Ok(out)
    }
}

/// Item-based neighbourhood model: sum of interaction-vector cosines
/// between the user's items and each candidate.
pub struct ItemKnnScorer {
    item_users: Vec<Vec<usize>>,
    user_items: Vec<Vec<usize>>,
    inv_norm: Vec<f64>,
}

impl ItemKnnScorer {
    pub fn new(x: &InteractionMatrix) -> Self {
        let mut item_users = vec![Vec::new(); x.n_items()];
        let user_items: Vec<Vec<usize>> = (0..x.n_users()).map(|u| x.user_items(u).to_vec()).collect();
        for (u, items) in user_items.iter().enumerate() {
            for &i in items {
                item_users[i].push(u);
            }
        }
        let inv_norm = item_users
            .iter()
            .map(|us| if us.is_empty() { 0.0 } else { 1.0 / (us.len() as f64).sqrt() })
            .collect();
        Self {
            item_users,
            user_items,
            inv_norm,
        }
    }
}

impl Scorer for ItemKnnScorer {
    fn name(&self) -> String {
        "item-knn".into()
    }

    fn score(&self, users: &[usize], inputs: &CsrMatrix, candidates: Option<&[usize]>) -> Result<DenseMatrix> {
        let n = self.item_users.len();
        ensure_dims("item-knn catalog", n, inputs.n_cols())?;
        let mut full = DenseMatrix::zeros(users.len(), n);
        for r in 0..users.len() {
            let acc = full.row_mut(r);
            for &i in inputs.row_indices(r) {
                for &v in &self.item_users[i] {
                    for &j in &self.user_items[v] {
                        acc[j] += self.inv_norm[i] * self.inv_norm[j];
                    }
                }
            }
        }
        Ok(select_columns(full, candidates))
    }
}

/// Scores 1 for every held-out target, 0 elsewhere. Upper bound reference.
pub struct OracleScorer {
    targets: std::collections::HashMap<usize, Vec<usize>>,
}

impl OracleScorer {
    pub fn new(users: &[usize], targets: &[Vec<usize>]) -> Self {
        Self {
            targets: users.iter().copied().zip(targets.iter().cloned()).collect(),
        }
    }
}

impl Scorer for OracleScorer {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn score(&self, users: &[usize], inputs: &CsrMatrix, candidates: Option<&[usize]>) -> Result<DenseMatrix> {
        let mut full = DenseMatrix::zeros(users.len(), inputs.n_cols());
        for (r, u) in users.iter().enumerate() {
            for &i in self.targets.get(u).map_or(&[][..], Vec::as_slice) {
                full.set(r, i, 1.0);
            }
        }
        Ok(select_columns(full, candidates))
    }
}
