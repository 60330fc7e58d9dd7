//! Item texts and their hashed bag-of-words features.

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, InteractionMatrix};

/// Item texts aligned by index with the item axis of an interaction matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemCorpus {
    item_ids: Vec<String>,
    texts: Vec<String>,
}

impl ItemCorpus {
    pub fn new(item_ids: Vec<String>, texts: Vec<String>) -> Result<Self> {
        if item_ids.len() != texts.len() {
            return Err(Error::DimensionMismatch {
                op: "ItemCorpus::new",
                expected: item_ids.len(),
                got: texts.len(),
            });
        }
        Ok(Self { item_ids, texts })
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn subset(&self, items: &[usize]) -> Result<Self> {
        let mut ids = Vec::with_capacity(items.len());
        let mut texts = Vec::with_capacity(items.len());
        for &i in items {
            if i >= self.len() {
                return Err(Error::IndexOutOfRange {
                    what: "corpus items",
                    index: i,
                    len: self.len(),
                });
            }
            ids.push(self.item_ids[i].clone());
            texts.push(self.texts[i].clone());
        }
        Ok(Self {
            item_ids: ids,
            texts,
        })
    }

    /// Checks that the corpus describes exactly the matrix's items, in order.
    pub fn check_aligned(&self, x: &InteractionMatrix) -> Result<()> {
        if self.len() != x.n_items() {
            return Err(Error::DimensionMismatch {
                op: "corpus alignment",
                expected: x.n_items(),
                got: self.len(),
            });
        }
        if let Some(i) = (0..self.len()).find(|&i| self.item_ids[i] != x.item_ids()[i]) {
            return Err(Error::Data(format!(
                "corpus item {i} is {:?} but matrix item is {:?}",
                self.item_ids[i],
                x.item_ids()[i]
            )));
        }
        Ok(())
    }
}

pub const MIN_HASH_BITS: u32 = 8;
pub const MAX_HASH_BITS: u32 = 24;

/// Hashed term-frequency rows, L2-normalized, `n_items × 2^hash_bits`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    hash_bits: u32,
    rows: CsrMatrix,
}

impl FeatureMatrix {
    pub fn hash_bits(&self) -> u32 {
        self.hash_bits
    }

    pub fn n_items(&self) -> usize {
        self.rows.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.rows.n_cols()
    }

    pub fn rows(&self) -> &CsrMatrix {
        &self.rows
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// Lowercased alphanumeric runs of `text`.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Hashes each token of each text into `2^hash_bits` buckets (FNV-1a, low
/// bits), accumulates counts and L2-normalizes every row.
pub fn featurize(corpus: &ItemCorpus, hash_bits: u32) -> Result<FeatureMatrix> {
    if !(MIN_HASH_BITS..=MAX_HASH_BITS).contains(&hash_bits) {
        return Err(Error::Config(format!(
            "hash_bits must be in {MIN_HASH_BITS}..={MAX_HASH_BITS}, got {hash_bits}"
        )));
    }
    let mask = (1u64 << hash_bits) - 1;
    let rows = corpus
        .texts()
        .iter()
        .map(|text| {
            let mut row: Vec<(usize, f64)> = tokenize(text)
                .map(|tok| ((fnv1a64(tok.as_bytes()) & mask) as usize, 1.0))
                .collect();
            row.sort_by_key(|&(c, _)| c);
            row
        })
        .collect();
    let counts = CsrMatrix::from_rows(1usize << hash_bits, rows)?;
    Ok(FeatureMatrix {
        hash_bits,
        rows: crate::sparse::normalize_sparse_rows(&counts),
    })
}
