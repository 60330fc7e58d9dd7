//! Scoring and top-K recommendation from item embeddings.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dense::{dot, DenseMatrix};
use crate::elsa::ElsaObjective;
use crate::error::{ensure_dims, Error, Result};
use crate::sparse::{normalize_rows, CsrMatrix};

/// Item embeddings with their external IDs.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub a: DenseMatrix,
    pub item_ids: Vec<String>,
    /// Nonzero rows have unit norm.
    pub normalized: bool,
}

impl EmbeddingMatrix {
    pub fn new(a: DenseMatrix, item_ids: Vec<String>) -> Result<Self> {
        ensure_dims("EmbeddingMatrix item ids", a.n_rows(), item_ids.len())?;
        Ok(Self {
            a,
            item_ids,
            normalized: false,
        })
    }

    pub fn normalized(&self) -> Self {
        Self {
            a: normalize_rows(&self.a),
            item_ids: self.item_ids.clone(),
            normalized: true,
        }
    }

    pub fn n_items(&self) -> usize {
        self.a.n_rows()
    }

    pub fn dim(&self) -> usize {
        self.a.n_cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub user: usize,
    /// `(item, score)`, best first.
    pub items: Vec<(usize, f64)>,
}

impl RankedList {
    pub fn item_indices(&self) -> Vec<usize> {
        self.items.iter().map(|&(i, _)| i).collect()
    }
}

/// `X·A·Aᵀ − X` over the whole catalog, using `A` as stored.
pub fn score_elsa(x_input: &CsrMatrix, emb: &EmbeddingMatrix) -> Result<DenseMatrix> {
    ElsaObjective::new(false).predict(x_input, &emb.a)
}

/// `score(u, j) = Σ_{i ∈ x_u} cos(A_i, A_j)` for each candidate `j`.
/// Column `c` of the result belongs to `candidates[c]`.
pub fn score_cbf(
    x_input: &CsrMatrix,
    emb: &EmbeddingMatrix,
    candidates: &[usize],
) -> Result<DenseMatrix> {
    if candidates.is_empty() {
        return Err(Error::Config("candidate list is empty".into()));
    }
    ensure_dims("score_cbf", emb.n_items(), x_input.n_cols())?;
    if let Some(&c) = candidates.iter().find(|&&c| c >= emb.n_items()) {
        return Err(Error::IndexOutOfRange {
            what: "candidate items",
            index: c,
            len: emb.n_items(),
        });
    }
    let unit = if emb.normalized {
        emb.a.clone()
    } else {
        normalize_rows(&emb.a)
    };
    let profiles = crate::sparse::spmm(x_input, &unit)?;
    let cand = unit.select_rows(candidates)?;
    let mut out = DenseMatrix::zeros(x_input.n_rows(), candidates.len());
    for u in 0..x_input.n_rows() {
        let p = profiles.row(u);
        for (c, o) in out.row_mut(u).iter_mut().enumerate() {
            *o = dot(p, cand.row(c));
        }
    }
    Ok(out)
}

/// Descending score, ties to the lower item index.
fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Top `k` of one row of candidate scores, skipping `seen` (sorted) items.
pub fn top_k_row(
    scores: &[f64],
    candidates: Option<&[usize]>,
    seen: &[usize],
    k: usize,
) -> Vec<(usize, f64)> {
    let item_of = |c: usize| candidates.map_or(c, |cs| cs[c]);
    let mut pool: Vec<(usize, f64)> = scores
        .iter()
        .enumerate()
        .map(|(c, &s)| (item_of(c), s))
        .filter(|(i, _)| seen.binary_search(i).is_err())
        .collect();
    if k < pool.len() {
        pool.select_nth_unstable_by(k, rank_order);
        pool.truncate(k);
    }
    pool.sort_unstable_by(rank_order);
    pool
}

/// Per-user top-`k` over full-catalog scores. With `mask_seen`, the user's
/// input items are never returned. Shorter lists come back when fewer than
/// `k` items are available.
pub fn top_k(
    scores: &DenseMatrix,
    x_input: &CsrMatrix,
    k: usize,
    mask_seen: bool,
) -> Result<Vec<RankedList>> {
    top_k_among(scores, None, x_input, k, mask_seen)
}

/// Like [`top_k`] but the score columns belong to `candidates`.
pub fn top_k_among(
    scores: &DenseMatrix,
    candidates: Option<&[usize]>,
    x_input: &CsrMatrix,
    k: usize,
    mask_seen: bool,
) -> Result<Vec<RankedList>> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    ensure_dims("top_k users", x_input.n_rows(), scores.n_rows())?;
    let n_cols = candidates.map_or(x_input.n_cols(), <[usize]>::len);
    ensure_dims("top_k columns", n_cols, scores.n_cols())?;
    Ok((0..scores.n_rows())
        .map(|u| {
            let seen = if mask_seen { x_input.row_indices(u) } else { &[] };
            RankedList {
                user: u,
                items: top_k_row(scores.row(u), candidates, seen, k),
            }
        })
        .collect())
}
