//! Compressed sparse row storage, the interaction matrix, and the handful of
//! sparse kernels the trainer needs.

use std::collections::HashMap;

use crate::dense::{axpy, DenseMatrix};
use crate::error::{ensure_dims, Error, Result};

/// CSR matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            indptr: vec![0; n_rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from per-row `(column, value)` lists. Entries are sorted
    /// and duplicate columns within a row are summed.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n_rows = rows.len();
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let start = indices.len();
            for (c, v) in row {
                if c >= n_cols {
                    return Err(Error::IndexOutOfRange {
                        what: "columns",
                        index: c,
                        len: n_cols,
                    });
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("sparse entry in column {c}")));
                }
                if indices.len() > start && *indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    /// Binary matrix from per-row column lists (duplicates collapse).
    pub fn from_binary_rows(n_cols: usize, rows: &[Vec<usize>]) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for row in rows {
            let mut cols = row.clone();
            cols.sort_unstable();
            cols.dedup();
            if let Some(&c) = cols.last() {
                if c >= n_cols {
                    return Err(Error::IndexOutOfRange {
                        what: "columns",
                        index: c,
                        len: n_cols,
                    });
                }
            }
            indices.extend_from_slice(&cols);
            indptr.push(indices.len());
        }
        let values = vec![1.0; indices.len()];
        Ok(Self {
            n_rows: rows.len(),
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let rows = m
            .rows()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(c, v)| (c, *v))
                    .collect()
            })
            .collect();
        Self::from_rows(m.n_cols(), rows).expect("dense input is finite and in range")
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                out.set(r, c, v);
            }
        }
        out
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row_indices(&self, r: usize) -> &[usize] {
        &self.indices[self.indptr[r]..self.indptr[r + 1]]
    }

    pub fn row_values(&self, r: usize) -> &[f64] {
        &self.values[self.indptr[r]..self.indptr[r + 1]]
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row_indices(r)
            .iter()
            .copied()
            .zip(self.row_values(r).iter().copied())
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.indptr[r + 1] - self.indptr[r]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 1.0)
    }
}

/// Row-normalizes a dense matrix to unit L2 norm. Zero rows stay zero.
pub fn normalize_rows(m: &DenseMatrix) -> DenseMatrix {
    let mut out = m.clone();
    for r in 0..out.n_rows() {
        let row = out.row_mut(r);
        let n = crate::dense::norm2(row);
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
    out
}

/// Sparse counterpart of [`normalize_rows`].
pub fn normalize_sparse_rows(m: &CsrMatrix) -> CsrMatrix {
    let mut out = m.clone();
    for r in 0..out.n_rows {
        let span = out.indptr[r]..out.indptr[r + 1];
        let vals = &mut out.values[span];
        let n = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            vals.iter_mut().for_each(|v| *v /= n);
        }
    }
    out
}

/// Sparse–dense product `x · a`.
pub fn spmm(x: &CsrMatrix, a: &DenseMatrix) -> Result<DenseMatrix> {
    ensure_dims("spmm", x.n_cols(), a.n_rows())?;
    let mut out = DenseMatrix::zeros(x.n_rows(), a.n_cols());
    for r in 0..x.n_rows() {
        let out_row = out.row_mut(r);
        for (c, v) in x.row(r) {
            axpy(v, a.row(c), out_row);
        }
    }
    Ok(out)
}

/// Binary implicit-feedback matrix with external ID maps and optional
/// per-interaction timestamps aligned with the stored entries.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    csr: CsrMatrix,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    timestamps: Option<Vec<i64>>,
}

/// One interaction given by contiguous indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub timestamp: Option<i64>,
}

impl InteractionMatrix {
    /// Canonicalizing constructor: sorts each row, collapses duplicate
    /// (user, item) pairs keeping the earliest timestamp, and checks ID maps.
    /// Timestamps must be present on all interactions or on none.
    pub fn from_interactions(
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        interactions: &[Interaction],
    ) -> Result<Self> {
        check_unique("user", &user_ids)?;
        check_unique("item", &item_ids)?;
        let n_users = user_ids.len();
        let n_items = item_ids.len();
        let with_ts = interactions.first().is_some_and(|i| i.timestamp.is_some());
        let mut per_user: Vec<Vec<(usize, Option<i64>)>> = vec![Vec::new(); n_users];
        for it in interactions {
            if it.user >= n_users {
                return Err(Error::IndexOutOfRange {
                    what: "users",
                    index: it.user,
                    len: n_users,
                });
            }
            if it.item >= n_items {
                return Err(Error::IndexOutOfRange {
                    what: "items",
                    index: it.item,
                    len: n_items,
                });
            }
            if it.timestamp.is_some() != with_ts {
                return Err(Error::Data(
                    "timestamps must be given for all interactions or none".into(),
                ));
            }
            per_user[it.user].push((it.item, it.timestamp));
        }
        let mut indptr = Vec::with_capacity(n_users + 1);
        let mut indices = Vec::with_capacity(interactions.len());
        let mut timestamps = Vec::new();
        indptr.push(0);
        for mut row in per_user {
            // (item, ts) ordering puts the earliest timestamp first per item
            row.sort_unstable();
            let mut last = None;
            for (item, ts) in row {
                if last == Some(item) {
                    continue;
                }
                last = Some(item);
                indices.push(item);
                if let Some(t) = ts {
                    timestamps.push(t);
                }
            }
            indptr.push(indices.len());
        }
        let values = vec![1.0; indices.len()];
        Ok(Self {
            csr: CsrMatrix {
                n_rows: n_users,
                n_cols: n_items,
                indptr,
                indices,
                values,
            },
            user_ids,
            item_ids,
            timestamps: with_ts.then_some(timestamps),
        })
    }

    /// Convenience constructor with generated IDs `u0..`, `i0..` and no timestamps.
    pub fn from_user_rows(n_items: usize, rows: &[Vec<usize>]) -> Result<Self> {
        let interactions: Vec<_> = rows
            .iter()
            .enumerate()
            .flat_map(|(u, items)| {
                items.iter().map(move |&i| Interaction {
                    user: u,
                    item: i,
                    timestamp: None,
                })
            })
            .collect();
        Self::from_interactions(
            (0..rows.len()).map(|u| format!("u{u}")).collect(),
            (0..n_items).map(|i| format!("i{i}")).collect(),
            &interactions,
        )
    }

    pub fn n_users(&self) -> usize {
        self.csr.n_rows
    }

    pub fn n_items(&self) -> usize {
        self.csr.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.csr.nnz()
    }

    pub fn density(&self) -> f64 {
        let cells = self.n_users() as f64 * self.n_items() as f64;
        if cells == 0.0 {
            0.0
        } else {
            self.nnz() as f64 / cells
        }
    }

    pub fn csr(&self) -> &CsrMatrix {
        &self.csr
    }

    pub fn user_items(&self, u: usize) -> &[usize] {
        self.csr.row_indices(u)
    }

    pub fn user_timestamps(&self, u: usize) -> Option<&[i64]> {
        self.timestamps
            .as_ref()
            .map(|t| &t[self.csr.indptr[u]..self.csr.indptr[u + 1]])
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn has_timestamps(&self) -> bool {
        self.timestamps.is_some()
    }

    /// All interactions in storage order (user-major, item ascending).
    pub fn interactions(&self) -> Vec<Interaction> {
        let mut out = Vec::with_capacity(self.nnz());
        for u in 0..self.n_users() {
            let ts = self.user_timestamps(u);
            for (k, &i) in self.user_items(u).iter().enumerate() {
                out.push(Interaction {
                    user: u,
                    item: i,
                    timestamp: ts.map(|t| t[k]),
                });
            }
        }
        out
    }

    /// Interaction counts per item.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_items()];
        for &i in &self.csr.indices {
            counts[i] += 1;
        }
        counts
    }

    /// Restriction of `X` to the given columns; column `j` of the result is
    /// `items[j]`, rows keep user order.
    pub fn gather_columns(&self, items: &[usize]) -> Result<CsrMatrix> {
        let users: Vec<usize> = (0..self.n_users()).collect();
        self.gather(&users, items)
    }

    /// Restriction of `X` to a user subset and a column subset. Cost is
    /// proportional to the interactions of the selected users plus `items.len()`.
    pub fn gather(&self, users: &[usize], items: &[usize]) -> Result<CsrMatrix> {
        let mut position = HashMap::with_capacity(items.len());
        for (j, &i) in items.iter().enumerate() {
            if i >= self.n_items() {
                return Err(Error::IndexOutOfRange {
                    what: "items",
                    index: i,
                    len: self.n_items(),
                });
            }
            if position.insert(i, j).is_some() {
                return Err(Error::DuplicateIndex(i));
            }
        }
        let mut indptr = Vec::with_capacity(users.len() + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for &u in users {
            if u >= self.n_users() {
                return Err(Error::IndexOutOfRange {
                    what: "users",
                    index: u,
                    len: self.n_users(),
                });
            }
            let start = indices.len();
            indices.extend(self.user_items(u).iter().filter_map(|i| position.get(i)));
            indices[start..].sort_unstable();
            indptr.push(indices.len());
        }
        let values = vec![1.0; indices.len()];
        Ok(CsrMatrix {
            n_rows: users.len(),
            n_cols: items.len(),
            indptr,
            indices,
            values,
        })
    }

    /// Keeps only the listed columns (in the given order) and re-indexes them.
    /// Users are kept even if they end up empty.
    pub fn restrict_items(&self, items: &[usize]) -> Result<Self> {
        let mut position = HashMap::with_capacity(items.len());
        for (j, &i) in items.iter().enumerate() {
            if i >= self.n_items() {
                return Err(Error::IndexOutOfRange {
                    what: "items",
                    index: i,
                    len: self.n_items(),
                });
            }
            if position.insert(i, j).is_some() {
                return Err(Error::DuplicateIndex(i));
            }
        }
        let interactions: Vec<_> = self
            .interactions()
            .into_iter()
            .filter_map(|it| {
                position.get(&it.item).map(|&j| Interaction { item: j, ..it })
            })
            .collect();
        Self::from_interactions(
            self.user_ids.clone(),
            items.iter().map(|&i| self.item_ids[i].clone()).collect(),
            &interactions,
        )
    }

    /// Sub-matrix of selected interactions, keeping both ID maps intact.
    pub fn with_interactions(&self, interactions: &[Interaction]) -> Result<Self> {
        Self::from_interactions(self.user_ids.clone(), self.item_ids.clone(), interactions)
    }
}

fn check_unique(what: &str, ids: &[String]) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::Data(format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::norm2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dense(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
        DenseMatrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap()
    }

    fn random_binary(rng: &mut ChaCha8Rng, r: usize, c: usize, p: f64) -> Vec<Vec<usize>> {
        (0..r)
            .map(|_| (0..c).filter(|_| rng.gen_bool(p)).collect())
            .collect()
    }

    #[test]
    fn normalize_three_four_five() {
        let m = DenseMatrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let n = normalize_rows(&m);
        assert_eq!(n.as_slice(), &[0.6, 0.8]);
    }

    #[test]
    fn normalize_zero_row_stays_zero() {
        let m = DenseMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(normalize_rows(&m).as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn normalize_random_rows_unit_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_dense(&mut rng, 5, 3);
        let n = normalize_rows(&m);
        for r in n.rows() {
            assert!((norm2(r) - 1.0).abs() <= 1e-12);
        }
        assert!(normalize_rows(&n).max_abs_diff(&n) <= 1e-12);
    }

    #[test]
    fn sparse_normalize_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = CsrMatrix::from_binary_rows(6, &random_binary(&mut rng, 9, 6, 0.4)).unwrap();
        let a = normalize_sparse_rows(&x).to_dense();
        let b = normalize_rows(&x.to_dense());
        assert!(a.max_abs_diff(&b) <= 1e-15);
    }

    #[test]
    fn spmm_identity() {
        let x = CsrMatrix::from_binary_rows(2, &[vec![0], vec![1]]).unwrap();
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(spmm(&x, &a).unwrap(), a);
    }

    #[test]
    fn spmm_empty_row_is_zero() {
        let x = CsrMatrix::from_binary_rows(2, &[vec![]]).unwrap();
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(spmm(&x, &a).unwrap().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn spmm_rejects_mismatch() {
        let x = CsrMatrix::from_binary_rows(3, &[vec![0]]).unwrap();
        let a = DenseMatrix::zeros(2, 2);
        assert!(matches!(spmm(&x, &a), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn spmm_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = CsrMatrix::from_binary_rows(20, &random_binary(&mut rng, 10, 20, 0.3)).unwrap();
        let a = random_dense(&mut rng, 20, 4);
        let dense = x.to_dense().matmul(&a).unwrap();
        assert!(spmm(&x, &a).unwrap().max_abs_diff(&dense) <= 1e-12);
    }

    #[test]
    fn gather_all_columns_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = InteractionMatrix::from_user_rows(8, &random_binary(&mut rng, 6, 8, 0.4)).unwrap();
        let all: Vec<usize> = (0..8).collect();
        assert_eq!(&x.gather_columns(&all).unwrap(), x.csr());
    }

    #[test]
    fn gather_untouched_column_is_zero() {
        let x = InteractionMatrix::from_user_rows(3, &[vec![0, 1], vec![1]]).unwrap();
        let g = x.gather_columns(&[2, 0]).unwrap();
        for r in 0..g.n_rows() {
            assert!(!g.row_indices(r).contains(&0));
        }
    }

    #[test]
    fn gather_matches_dense_slice() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = InteractionMatrix::from_user_rows(12, &random_binary(&mut rng, 7, 12, 0.3))
            .unwrap();
        let cols = [5, 0, 11, 3];
        let dense = x.csr().to_dense();
        let g = x.gather_columns(&cols).unwrap().to_dense();
        for r in 0..7 {
            for (j, &c) in cols.iter().enumerate() {
                assert_eq!(g.get(r, j), dense.get(r, c));
            }
        }
    }

    #[test]
    fn gather_rejects_out_of_range_and_duplicates() {
        let x = InteractionMatrix::from_user_rows(3, &[vec![0]]).unwrap();
        assert!(matches!(
            x.gather_columns(&[3]),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            x.gather_columns(&[1, 1]),
            Err(Error::DuplicateIndex(1))
        ));
    }

    #[test]
    fn construction_dedups_keeping_earliest_timestamp() {
        let x = InteractionMatrix::from_interactions(
            vec!["a".into()],
            vec!["x".into(), "y".into()],
            &[
                Interaction { user: 0, item: 1, timestamp: Some(9) },
                Interaction { user: 0, item: 1, timestamp: Some(3) },
                Interaction { user: 0, item: 0, timestamp: Some(5) },
            ],
        )
        .unwrap();
        assert_eq!(x.user_items(0), &[0, 1]);
        assert_eq!(x.user_timestamps(0).unwrap(), &[5, 3]);
        assert!(x.csr().is_binary());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let r = InteractionMatrix::from_interactions(
            vec!["a".into(), "a".into()],
            vec!["x".into()],
            &[],
        );
        assert!(matches!(r, Err(Error::Data(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalize_is_idempotent(
                data in prop::collection::vec(-100.0f64..100.0, 1..60),
                cols in 1usize..6,
            ) {
                let rows = data.len() / cols;
                prop_assume!(rows > 0);
                let m = DenseMatrix::from_vec(rows, cols, data[..rows * cols].to_vec()).unwrap();
                let once = normalize_rows(&m);
                prop_assert!(normalize_rows(&once).max_abs_diff(&once) <= 1e-12);
            }

            #[test]
            fn spmm_agrees_with_dense(seed in any::<u64>(), r in 1usize..100, c in 1usize..100, d in 1usize..8) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = CsrMatrix::from_binary_rows(c, &random_binary(&mut rng, r, c, 0.1)).unwrap();
                let a = random_dense(&mut rng, c, d);
                let dense = x.to_dense().matmul(&a).unwrap();
                prop_assert!(spmm(&x, &a).unwrap().max_abs_diff(&dense) <= 1e-10);
            }

            #[test]
            fn gather_permutation_roundtrip(seed in any::<u64>(), n_items in 1usize..30) {
                use rand::seq::SliceRandom;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = InteractionMatrix::from_user_rows(
                    n_items, &random_binary(&mut rng, 8, n_items, 0.3)).unwrap();
                let mut perm: Vec<usize> = (0..n_items).collect();
                perm.shuffle(&mut rng);
                let permuted = x.gather_columns(&perm).unwrap().to_dense();
                let mut back = DenseMatrix::zeros(8, n_items);
                for r in 0..8 {
                    for (j, &c) in perm.iter().enumerate() {
                        back.set(r, c, permuted.get(r, j));
                    }
                }
                prop_assert_eq!(back, x.csr().to_dense());
            }
        }
    }
}
