use std::collections::HashMap;
use std::path::Path;

use super::{
    check_backward_shapes, check_items, init_segments, seeded, EncoderKind, EncoderSpec,
    ItemEncoder,
};
use crate::dataio::matfile;
use crate::dense::{axpy, DenseMatrix};
use crate::error::{Error, Result};

/// Fixed, externally computed item embeddings (e.g. from a sentence encoder)
/// followed by a trainable linear head: `A = E·W (+ b)`.
///
/// θ layout: `W` (`input_dim × dim`, row-major), then `b` (`dim`) when the
/// bias is enabled.
#[derive(Debug, Clone)]
pub struct FrozenPlusHead {
    frozen: DenseMatrix,
    frozen_path: Option<std::path::PathBuf>,
    dim: usize,
    bias: bool,
    params: Vec<f64>,
}

impl FrozenPlusHead {
    pub fn new(frozen: DenseMatrix, dim: usize, bias: bool, seed: u64) -> Self {
        let e = frozen.n_cols();
        let mut params = Vec::with_capacity(e * dim + if bias { dim } else { 0 });
        let mut segments = vec![(e * dim, e)];
        if bias {
            segments.push((dim, e));
        }
        init_segments(&mut seeded(seed), &mut params, &segments);
        Self {
            frozen,
            frozen_path: None,
            dim,
            bias,
            params,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.frozen.n_cols()
    }
}

/// Reads an embedding file and reorders its rows to follow `item_ids`.
pub(crate) fn load_aligned(path: &Path, item_ids: &[String]) -> Result<DenseMatrix> {
    let (header, data) = matfile::read(path)?;
    if header.item_ids.is_empty() {
        return Err(Error::corrupt(path, "frozen embeddings need item ids"));
    }
    let full = DenseMatrix::from_vec(header.n_rows, header.n_cols, data)?;
    let index: HashMap<&str, usize> = header
        .item_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let rows = item_ids
        .iter()
        .map(|id| {
            index.get(id.as_str()).copied().ok_or_else(|| {
                Error::Data(format!("item {id:?} has no row in {}", path.display()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    full.select_rows(&rows)
}

impl ItemEncoder for FrozenPlusHead {
    fn kind(&self) -> EncoderKind {
        EncoderKind::FrozenHead
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn n_items(&self) -> usize {
        self.frozen.n_rows()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn encode(&self, items: &[usize]) -> Result<DenseMatrix> {
        check_items(items, self.n_items())?;
        let d = self.dim;
        let n_w = self.input_dim() * d;
        let mut out = DenseMatrix::zeros(items.len(), d);
        for (r, &i) in items.iter().enumerate() {
            let o = out.row_mut(r);
            for (k, &e) in self.frozen.row(i).iter().enumerate() {
                axpy(e, &self.params[k * d..(k + 1) * d], o);
            }
            if self.bias {
                axpy(1.0, &self.params[n_w..n_w + d], o);
            }
        }
        Ok(out)
    }

    fn accumulate_backward(&self, items: &[usize], grads: &DenseMatrix, out: &mut [f64]) -> Result<()> {
        check_items(items, self.n_items())?;
        check_backward_shapes(items, grads, self.dim, out, self.params.len())?;
        let d = self.dim;
        let n_w = self.input_dim() * d;
        for (r, &i) in items.iter().enumerate() {
            let g = grads.row(r);
            for (k, &e) in self.frozen.row(i).iter().enumerate() {
                axpy(e, g, &mut out[k * d..(k + 1) * d]);
            }
            if self.bias {
                axpy(1.0, g, &mut out[n_w..n_w + d]);
            }
        }
        Ok(())
    }

    fn spec(&self) -> EncoderSpec {
        EncoderSpec {
            bias: self.bias,
            frozen_path: self.frozen_path.clone(),
            ..EncoderSpec::new(EncoderKind::FrozenHead, self.dim)
        }
    }
}

impl FrozenPlusHead {
    pub(crate) fn with_source(mut self, path: &Path) -> Self {
        self.frozen_path = Some(path.to_path_buf());
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::testutil::frozen_file;

    #[test]
    fn aligned_load_reorders_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = frozen_file(dir.path(), 4, 2, 1);
        let (_, data) = matfile::read(&path).unwrap();
        let ids: Vec<String> = ["i2", "i0"].iter().map(|s| s.to_string()).collect();
        let m = load_aligned(&path, &ids).unwrap();
        assert_eq!(m.row(0), &data[4..6]);
        assert_eq!(m.row(1), &data[0..2]);
        let missing = vec!["i9".to_string()];
        assert!(matches!(load_aligned(&path, &missing), Err(Error::Data(_))));
    }

    #[test]
    fn head_is_linear_in_frozen_input() {
        let frozen = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let mut enc = FrozenPlusHead::new(frozen, 2, false, 0);
        enc.params_mut().copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(enc.encode(&[0, 1]).unwrap().as_slice(), &[1.0, 2.0, 6.0, 8.0]);
    }
}
