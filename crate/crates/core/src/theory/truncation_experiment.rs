use serde::{Deserialize, Serialize};

use super::eckart_young_truncate;
use crate::autodiff::{Graph, Op, ParamStore};
use crate::error::{Error, Result};
use crate::numerics::jacobi_svd;
use crate::training::{adamw_step, AdamWConfig, OptimState};
use crate::{Prng, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { steps: 2000, lr: 1e-3, batch: 256, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub width: usize,
    pub rank: usize,
    pub adapter_rmse: f64,
    pub truncation_rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeTable {
    pub rows: Vec<ProbeRow>,
    /// Set when `ΔW` is zero and both columns are trivially zero.
    pub degenerate: bool,
}

/// Random `n×n` orthogonal matrix.
pub fn random_orthogonal(n: usize, rng: &mut Prng) -> Result<Tensor> {
    let g = Tensor::from_fn(&[n, n], |_| rng.normal());
    Ok(jacobi_svd(&g)?.u)
}

/// `ΔW = U·diag(σ)·Vᵀ` with random orthogonal factors.
pub fn synthetic_delta_w(sigma: &[f64], seed: u64) -> Result<Tensor> {
    let d = sigma.len();
    let mut rng = Prng::new(seed);
    let u = random_orthogonal(d, &mut rng)?;
    let v = random_orthogonal(d, &mut rng)?;
    let us = Tensor::from_fn(&[d, d], |i| u.get(i) * sigma[i[1]]);
    us.matmul(&v.transpose()?)
}

/// Activation rows `z·diag(i^{−γ})·Qᵀ` with Gaussian `z` and a random orientation `Q`.
pub fn synthetic_activations(rows: usize, dim: usize, gamma: f64, seed: u64) -> Result<Tensor> {
    let mut rng = Prng::new(seed);
    let q = random_orthogonal(dim, &mut rng)?;
    let z = Tensor::from_fn(&[rows, dim], |i| rng.normal() * ((i[1] + 1) as f64).powf(-gamma));
    z.matmul(&q.transpose()?)
}

fn rmse(pred: &Tensor, y: &Tensor) -> Result<f64> {
    Ok((pred.sub(y)?.frobenius_norm().powi(2) / y.len() as f64).sqrt())
}

fn rows(t: &Tensor, r: std::ops::Range<usize>) -> Result<Tensor> {
    t.slice(&[r, 0..t.cols()])
}

/// Two-layer width-`m` MLP `gelu(H·W1 + b1)·W2 + b2` fit to `Y` with minibatch AdamW; returns validation RMSE.
pub fn train_mlp_probe(h_train: &Tensor, y_train: &Tensor, h_val: &Tensor, y_val: &Tensor, width: usize, cfg: &ProbeConfig) -> Result<f64> {
    let (n, d) = (h_train.rows(), h_train.cols());
    let dout = y_train.cols();
    let batch = cfg.batch.min(n);
    let build = |b: usize| -> Result<(Graph, crate::autodiff::NodeId, crate::autodiff::NodeId)> {
        let mut g = Graph::new();
        let x = g.input("h", &[b, d])?;
        let t = g.input("y", &[b, dout])?;
        let w1 = g.param("w1", &[d, width])?;
        let b1 = g.param("b1", &[width])?;
        let w2 = g.param("w2", &[width, dout])?;
        let b2 = g.param("b2", &[dout])?;
        let a = g.linear(x, w1, Some(b1))?;
        let a = g.gelu(a)?;
        let out = g.linear(a, w2, Some(b2))?;
        let loss = g.op(Op::MseLoss { pred: out, target: t })?;
        Ok((g, out, loss))
    };
    let mut rng = Prng::new(cfg.seed);
    let bound = 1.0 / (d as f64).sqrt();
    let mut params = ParamStore::new();
    params.insert("w1", Tensor::from_fn(&[d, width], |_| rng.uniform_in(-bound, bound)));
    params.insert("b1", Tensor::zeros(&[width]));
    params.insert("w2", Tensor::zeros(&[width, dout]));
    params.insert("b2", Tensor::zeros(&[dout]));
    let (mut g, _, loss) = build(batch)?;
    let opt = AdamWConfig { lr: cfg.lr, ..AdamWConfig::default() };
    let mut state = OptimState::new();
    let mut order = rng.permutation(n);
    let mut cursor = 0;
    for _ in 0..cfg.steps {
        if cursor + batch > n {
            order = rng.permutation(n);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + batch];
        cursor += batch;
        let mut feed = ParamStore::new();
        feed.insert("h", Tensor::from_fn(&[batch, d], |i| h_train.get(&[idx[i[0]], i[1]])));
        feed.insert("y", Tensor::from_fn(&[batch, dout], |i| y_train.get(&[idx[i[0]], i[1]])));
        g.forward(&[&feed, &params])?;
        let grads = g.backward(loss)?;
        adamw_step(&mut params, &grads, &mut state, &opt, opt.lr)?;
    }
    let (mut gv, out, _) = build(h_val.rows())?;
    let mut feed = ParamStore::new();
    feed.insert("h", h_val.clone());
    feed.insert("y", y_val.clone());
    gv.forward(&[&feed, &params])?;
    rmse(gv.value(out)?, y_val)
}

/// Adapter RMSE(m) against the closed-form rank-r truncation RMSE on a 90/10 split of `(H, H·ΔWᵀ)`.
pub fn adapter_vs_truncation_experiment(h: &Tensor, delta_w: &Tensor, budgets: &[(usize, usize)], cfg: &ProbeConfig) -> Result<ProbeTable> {
    let n = h.rows();
    if n < 10 || delta_w.cols() != h.cols() {
        return Err(Error::config(format!("activations {:?} do not fit delta_w {:?}", h.shape(), delta_w.shape())));
    }
    let y = h.matmul(&delta_w.transpose()?)?;
    let split = n * 9 / 10;
    let (ht, yt) = (rows(h, 0..split)?, rows(&y, 0..split)?);
    let (hv, yv) = (rows(h, split..n)?, rows(&y, split..n)?);
    let degenerate = delta_w.max_abs() == 0.0;
    let k = delta_w.rows().min(delta_w.cols());
    let mut out = Vec::with_capacity(budgets.len());
    for &(m, r) in budgets {
        let truncation_rmse = if r >= k {
            0.0
        } else {
            let (wr, _) = eckart_young_truncate(delta_w, r)?;
            rmse(&hv.matmul(&wr.transpose()?)?, &yv)?
        };
        let adapter_rmse = if degenerate { 0.0 } else { train_mlp_probe(&ht, &yt, &hv, &yv, m, cfg)? };
        out.push(ProbeRow { width: m, rank: r, adapter_rmse, truncation_rmse });
    }
    Ok(ProbeTable { rows: out, degenerate })
}
