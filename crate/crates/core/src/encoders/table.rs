use super::{check_backward_shapes, check_items, EncoderKind, EncoderSpec, ItemEncoder};
use crate::dense::{axpy, DenseMatrix};
use crate::error::Result;

/// One free embedding row per item. θ is the `n_items × dim` table, row-major.
///
/// Training this encoder through the sampled trainer is plain ELSA.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    n_items: usize,
    dim: usize,
    table: Vec<f64>,
}

impl EmbeddingTable {
    /// Uniform(−1/√dim, 1/√dim) initialization, identical to the ELSA trainer's.
    pub fn new(n_items: usize, dim: usize, seed: u64) -> Self {
        let a = crate::elsa::init_item_matrix(n_items, dim, seed);
        Self {
            n_items,
            dim,
            table: a.into_vec(),
        }
    }

    pub fn from_matrix(a: DenseMatrix) -> Self {
        let (n_items, dim) = a.shape();
        Self {
            n_items,
            dim,
            table: a.into_vec(),
        }
    }
}

impl ItemEncoder for EmbeddingTable {
    fn kind(&self) -> EncoderKind {
        EncoderKind::Table
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn n_items(&self) -> usize {
        self.n_items
    }

    fn params(&self) -> &[f64] {
        &self.table
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.table
    }

    fn encode(&self, items: &[usize]) -> Result<DenseMatrix> {
        check_items(items, self.n_items)?;
        let mut out = DenseMatrix::zeros(items.len(), self.dim);
        for (r, &i) in items.iter().enumerate() {
            out.row_mut(r)
                .copy_from_slice(&self.table[i * self.dim..(i + 1) * self.dim]);
        }
        Ok(out)
    }

    fn accumulate_backward(&self, items: &[usize], grads: &DenseMatrix, out: &mut [f64]) -> Result<()> {
        check_items(items, self.n_items)?;
        check_backward_shapes(items, grads, self.dim, out, self.table.len())?;
        for (r, &i) in items.iter().enumerate() {
            axpy(1.0, grads.row(r), &mut out[i * self.dim..(i + 1) * self.dim]);
        }
        Ok(())
    }

    fn spec(&self) -> EncoderSpec {
        EncoderSpec::new(EncoderKind::Table, self.dim)
    }
}
