//! ELSA decoder: the low-rank shallow autoencoder `W = AAᵀ` with the
//! diagonal removed, its reconstruction loss on row-normalized
//! interactions, and the analytic gradient with respect to `A`.
//!
//! The same objective serves two callers: the encoder trainer, which only
//! needs `∂L/∂A` for the sampled item rows, and the standalone ELSA
//! trainer, which optimizes `A` directly.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::matfile::{self, MatrixHeader, Precision};
use crate::dense::{axpy, dot, norm2, DenseMatrix};
use crate::error::{ensure_dims, Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::recsys::EmbeddingMatrix;
use crate::sparse::{normalize_rows, spmm, CsrMatrix, InteractionMatrix};
use crate::training::report::{StepRecord, TrainReport};
use crate::training::sampler::epoch_user_order;

/// Loss and prediction for a user batch restricted to a set of item columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElsaObjective {
    /// Row-normalize `A` before forming predictions.
    pub normalize_a: bool,
}

impl Default for ElsaObjective {
    fn default() -> Self {
        Self { normalize_a: true }
    }
}

struct Forward {
    a_eff: DenseMatrix,
    a_norms: Vec<f64>,
    z: DenseMatrix,
    p: DenseMatrix,
}

impl ElsaObjective {
    pub fn new(normalize_a: bool) -> Self {
        Self { normalize_a }
    }

    /// The item matrix actually used in predictions.
    pub fn effective_a(&self, a: &DenseMatrix) -> DenseMatrix {
        if self.normalize_a {
            normalize_rows(a)
        } else {
            a.clone()
        }
    }

    fn forward(&self, x: &CsrMatrix, a: &DenseMatrix) -> Result<Forward> {
        ensure_dims("elsa", x.n_cols(), a.n_rows())?;
        let a_norms: Vec<f64> = a.rows().map(norm2).collect();
        let a_eff = self.effective_a(a);
        let z = spmm(x, &a_eff)?;
        let mut p = z.matmul_t(&a_eff)?;
        for r in 0..x.n_rows() {
            for (c, v) in x.row(r) {
                let cur = p.get(r, c);
                p.set(r, c, cur - v);
            }
        }
        Ok(Forward {
            a_eff,
            a_norms,
            z,
            p,
        })
    }

    /// `X·A·Aᵀ − X` over the batch columns.
    pub fn predict(&self, x: &CsrMatrix, a: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.forward(x, a)?.p)
    }

    /// `Σ_u ‖norm(x_u) − norm(p_u)‖²`, summed over users.
    pub fn loss(&self, x: &CsrMatrix, a: &DenseMatrix) -> Result<f64> {
        let fwd = self.forward(x, a)?;
        Ok((0..x.n_rows()).map(|u| row_loss(x, u, fwd.p.row(u)).0).sum())
    }

    pub fn loss_grad_a(&self, x: &CsrMatrix, a: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.loss_and_grad(x, a)?.1)
    }

    /// Loss together with `∂L/∂A`.
    ///
    /// Users whose prediction row is exactly zero sit on the non-differentiable
    /// point of the normalization; they contribute their loss but no gradient.
    pub fn loss_and_grad(&self, x: &CsrMatrix, a: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
        let Forward {
            a_eff,
            a_norms,
            z,
            p,
        } = self.forward(x, a)?;
        let (n_users, n_items) = p.shape();
        let mut loss = 0.0;
        // gradient w.r.t. the un-normalized prediction rows
        let mut gp = DenseMatrix::zeros(n_users, n_items);
        for u in 0..n_users {
            let (l, p_norm) = row_loss(x, u, p.row(u));
            loss += l;
            if p_norm == 0.0 {
                continue;
            }
            let x_norm = x.row_values(u).iter().map(|v| v * v).sum::<f64>().sqrt();
            let g = gp.row_mut(u);
            for (gj, pj) in g.iter_mut().zip(p.row(u)) {
                *gj = 2.0 * pj / p_norm;
            }
            if x_norm > 0.0 {
                for (c, v) in x.row(u) {
                    g[c] -= 2.0 * v / x_norm;
                }
            }
            // project out the radial component, then scale by 1/‖p‖
            let radial = p.row(u).iter().zip(g.iter()).map(|(pj, gj)| pj * gj).sum::<f64>()
                / p_norm;
            for (gj, pj) in g.iter_mut().zip(p.row(u)) {
                *gj = (*gj - radial * pj / p_norm) / p_norm;
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("ELSA loss".into()));
        }

        // P = X Â Âᵀ − X  ⇒  ∂L/∂Â = Xᵀ (G Â) + Gᵀ (X Â)
        let ga = gp.matmul(&a_eff)?;
        let mut grad = DenseMatrix::zeros(a.n_rows(), a.n_cols());
        for u in 0..n_users {
            for (c, v) in x.row(u) {
                axpy(v, ga.row(u), grad.row_mut(c));
            }
            let zu = z.row(u);
            for (j, &g) in gp.row(u).iter().enumerate() {
                if g != 0.0 {
                    axpy(g, zu, grad.row_mut(j));
                }
            }
        }

        if self.normalize_a {
            for (i, &n) in a_norms.iter().enumerate() {
                let row = grad.row_mut(i);
                if n == 0.0 {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    continue;
                }
                let a_hat = a_eff.row(i);
                let radial = dot(a_hat, row);
                for (gv, av) in row.iter_mut().zip(a_hat) {
                    *gv = (*gv - radial * av) / n;
                }
            }
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite("ELSA gradient".into()));
        }
        Ok((loss, grad))
    }
}

/// Loss contribution of one user row and the norm of its prediction.
fn row_loss(x: &CsrMatrix, u: usize, p_row: &[f64]) -> (f64, f64) {
    let x_norm = x.row_values(u).iter().map(|v| v * v).sum::<f64>().sqrt();
    let p_norm = norm2(p_row);
    let inv_p = if p_norm > 0.0 { 1.0 / p_norm } else { 0.0 };
    let inv_x = if x_norm > 0.0 { 1.0 / x_norm } else { 0.0 };
    let mut l: f64 = p_row.iter().map(|v| (v * inv_p).powi(2)).sum();
    for (c, v) in x.row(u) {
        let pc = p_row[c] * inv_p;
        let xc = v * inv_x;
        l += (xc - pc).powi(2) - pc * pc;
    }
    (l, p_norm)
}

/// Uniform(−1/√d, 1/√d) initialization of an `n_items × d` item matrix.
pub fn init_item_matrix(n_items: usize, d: usize, seed: u64) -> DenseMatrix {
    let bound = 1.0 / (d as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n_items * d)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    DenseMatrix::from_vec(n_items, d, data).expect("uniform samples are finite")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElsaModel {
    pub a: DenseMatrix,
    pub normalize_a: bool,
    pub item_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElsaConfig {
    pub d: usize,
    pub epochs: usize,
    pub batch_users: usize,
    pub lr: f64,
    pub seed: u64,
    pub normalize_a: bool,
}

impl ElsaModel {
    pub fn d(&self) -> usize {
        self.a.n_cols()
    }

    pub fn objective(&self) -> ElsaObjective {
        ElsaObjective::new(self.normalize_a)
    }

    /// Scores `X·A·Aᵀ − X` for full-catalog input rows.
    pub fn predict(&self, x: &CsrMatrix) -> Result<DenseMatrix> {
        self.objective().predict(x, &self.a)
    }

    /// The effective item matrix as an embedding table.
    pub fn embeddings(&self) -> EmbeddingMatrix {
        EmbeddingMatrix {
            a: self.objective().effective_a(&self.a),
            item_ids: self.item_ids.clone(),
            normalized: self.normalize_a,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = MatrixHeader::new(
            matfile::KIND_ELSA,
            self.a.n_rows(),
            self.a.n_cols(),
            Precision::F64,
            self.item_ids.clone(),
            false,
        )
        .with_extra(serde_json::json!({ "normalize_a": self.normalize_a }));
        matfile::write(path, &header, self.a.as_slice())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, data) = matfile::read(path)?;
        if header.kind != matfile::KIND_ELSA {
            return Err(Error::corrupt(path, format!("expected ELSA model, found {}", header.kind)));
        }
        let normalize_a = header
            .extra
            .get("normalize_a")
            .and_then(|v| v.as_bool())
            .ok_or_else(|| Error::corrupt(path, "missing normalize_a"))?;
        Ok(Self {
            a: DenseMatrix::from_vec(header.n_rows, header.n_cols, data)?,
            normalize_a,
            item_ids: header.item_ids,
        })
    }
}

/// Direct optimization of `A` with Adam on full-catalog user batches.
pub fn train_elsa(x: &InteractionMatrix, cfg: &ElsaConfig) -> Result<(ElsaModel, TrainReport)> {
    if x.nnz() == 0 {
        return Err(Error::Data("interaction matrix is empty".into()));
    }
    if cfg.epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    if cfg.d == 0 || cfg.d > x.n_items() {
        return Err(Error::Config(format!(
            "embedding dimension must be in 1..={}, got {}",
            x.n_items(),
            cfg.d
        )));
    }
    if cfg.batch_users == 0 {
        return Err(Error::Config("batch_users must be at least 1".into()));
    }
    let objective = ElsaObjective::new(cfg.normalize_a);
    let mut a = init_item_matrix(x.n_items(), cfg.d, cfg.seed);
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), a.as_slice().len())?;
    let all_items: Vec<usize> = (0..x.n_items()).collect();
    let mut report = TrainReport::new(serde_json::to_value(cfg).unwrap_or_default());
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let order = epoch_user_order(x.n_users(), cfg.seed, epoch as u64);
        for users in order.chunks(cfg.batch_users) {
            let t0 = Instant::now();
            let xb = x.gather(users, &all_items)?;
            let (loss, grad) = objective.loss_and_grad(&xb, &a)?;
            adam.step(a.as_mut_slice(), grad.as_slice())?;
            report.push_step(StepRecord {
                epoch,
                step,
                loss,
                seconds: t0.elapsed().as_secs_f64(),
            });
            step += 1;
        }
        report.close_epoch(epoch);
    }
    Ok((
        ElsaModel {
            a,
            normalize_a: cfg.normalize_a,
            item_ids: x.item_ids().to_vec(),
        },
        report,
    ))
}
