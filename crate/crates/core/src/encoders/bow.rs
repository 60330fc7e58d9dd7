use std::sync::Arc;

use super::{
    check_backward_shapes, check_items, init_segments, seeded, EncoderKind, EncoderSpec,
    FeatureMatrix, ItemEncoder,
};
use crate::dense::{axpy, dot, DenseMatrix};
use crate::error::Result;

/// Linear map of hashed text features: `A = F·W (+ b)`.
///
/// θ layout: `W` (`n_features × dim`, row-major), then `b` (`dim`) when
/// the bias is enabled.
#[derive(Debug, Clone)]
pub struct BowLinear {
    features: Arc<FeatureMatrix>,
    dim: usize,
    bias: bool,
    params: Vec<f64>,
}

impl BowLinear {
    pub fn new(features: Arc<FeatureMatrix>, dim: usize, bias: bool, seed: u64) -> Self {
        let f = features.n_features();
        let mut params = Vec::with_capacity(f * dim + if bias { dim } else { 0 });
        let mut segments = vec![(f * dim, f)];
        if bias {
            segments.push((dim, f));
        }
        init_segments(&mut seeded(seed), &mut params, &segments);
        Self {
            features,
            dim,
            bias,
            params,
        }
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }
}

impl ItemEncoder for BowLinear {
    fn kind(&self) -> EncoderKind {
        EncoderKind::BowLinear
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn n_items(&self) -> usize {
        self.features.n_items()
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
        let n_w = self.features.n_features() * d;
        let rows = self.features.rows();
        let mut out = DenseMatrix::zeros(items.len(), d);
        for (r, &i) in items.iter().enumerate() {
            let o = out.row_mut(r);
            for (f, v) in rows.row(i) {
                axpy(v, &self.params[f * d..(f + 1) * d], o);
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
        let n_w = self.features.n_features() * d;
        let rows = self.features.rows();
        for (r, &i) in items.iter().enumerate() {
            let g = grads.row(r);
            for (f, v) in rows.row(i) {
                axpy(v, g, &mut out[f * d..(f + 1) * d]);
            }
            if self.bias {
                axpy(1.0, g, &mut out[n_w..n_w + d]);
            }
        }
        Ok(())
    }

    fn spec(&self) -> EncoderSpec {
        EncoderSpec {
            hash_bits: Some(self.features.hash_bits()),
            bias: self.bias,
            ..EncoderSpec::new(EncoderKind::BowLinear, self.dim)
        }
    }
}

/// One tanh hidden layer over hashed text features:
/// `A = tanh(F·W₁ + b₁)·W₂ + b₂`.
///
/// θ layout: `W₁` (`n_features × hidden`), `b₁` (`hidden`), `W₂`
/// (`hidden × dim`), `b₂` (`dim`), all row-major.
#[derive(Debug, Clone)]
pub struct BowMlp {
    features: Arc<FeatureMatrix>,
    hidden: usize,
    dim: usize,
    params: Vec<f64>,
}

struct MlpOffsets {
    b1: usize,
    w2: usize,
    b2: usize,
}

impl BowMlp {
    pub fn new(features: Arc<FeatureMatrix>, hidden: usize, dim: usize, seed: u64) -> Self {
        let f = features.n_features();
        let mut params = Vec::with_capacity(f * hidden + hidden + hidden * dim + dim);
        init_segments(
            &mut seeded(seed),
            &mut params,
            &[(f * hidden, f), (hidden, f), (hidden * dim, hidden), (dim, hidden)],
        );
        Self {
            features,
            hidden,
            dim,
            params,
        }
    }

    fn offsets(&self) -> MlpOffsets {
        let b1 = self.features.n_features() * self.hidden;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.hidden * self.dim;
        MlpOffsets { b1, w2, b2 }
    }

    fn hidden_activations(&self, item: usize, off: &MlpOffsets) -> Vec<f64> {
        let h = self.hidden;
        let mut pre = self.params[off.b1..off.b1 + h].to_vec();
        for (f, v) in self.features.rows().row(item) {
            axpy(v, &self.params[f * h..(f + 1) * h], &mut pre);
        }
        pre.iter_mut().for_each(|x| *x = x.tanh());
        pre
    }
}

impl ItemEncoder for BowMlp {
    fn kind(&self) -> EncoderKind {
        EncoderKind::BowMlp
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn n_items(&self) -> usize {
        self.features.n_items()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn encode(&self, items: &[usize]) -> Result<DenseMatrix> {
        check_items(items, self.n_items())?;
        let off = self.offsets();
        let d = self.dim;
        let mut out = DenseMatrix::zeros(items.len(), d);
        for (r, &i) in items.iter().enumerate() {
            let act = self.hidden_activations(i, &off);
            let o = out.row_mut(r);
            o.copy_from_slice(&self.params[off.b2..off.b2 + d]);
            for (k, &a) in act.iter().enumerate() {
                let w = off.w2 + k * d;
                axpy(a, &self.params[w..w + d], o);
            }
        }
        Ok(out)
    }

    fn accumulate_backward(&self, items: &[usize], grads: &DenseMatrix, out: &mut [f64]) -> Result<()> {
        check_items(items, self.n_items())?;
        check_backward_shapes(items, grads, self.dim, out, self.params.len())?;
        let off = self.offsets();
        let (h, d) = (self.hidden, self.dim);
        for (r, &i) in items.iter().enumerate() {
            let g = grads.row(r);
            let act = self.hidden_activations(i, &off);
            axpy(1.0, g, &mut out[off.b2..off.b2 + d]);
            let mut g_pre = vec![0.0; h];
            for (k, &a) in act.iter().enumerate() {
                let w = off.w2 + k * d;
                axpy(a, g, &mut out[w..w + d]);
                g_pre[k] = dot(g, &self.params[w..w + d]) * (1.0 - a * a);
            }
            axpy(1.0, &g_pre, &mut out[off.b1..off.b1 + h]);
            for (f, v) in self.features.rows().row(i) {
                axpy(v, &g_pre, &mut out[f * h..(f + 1) * h]);
            }
        }
        Ok(())
    }

    fn spec(&self) -> EncoderSpec {
        EncoderSpec {
            hash_bits: Some(self.features.hash_bits()),
            hidden: Some(self.hidden),
            bias: true,
            ..EncoderSpec::new(EncoderKind::BowMlp, self.dim)
        }
    }
}
