use crate::autodiff::{gelu, ParamStore};
use crate::error::{Error, Result};
use crate::{Prng, Tensor};

pub(crate) const LN_EPS: f64 = 1e-5;

/// `[rows, fan_in]` matrix, uniform on `±√(6/fan_in)`.
pub fn kaiming_uniform(rows: usize, fan_in: usize, rng: &mut Prng) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    Tensor::from_fn(&[rows, fan_in], |_| rng.uniform_in(-bound, bound))
}

fn rows_of(x: &Tensor, dim: usize, what: &str) -> Result<usize> {
    if x.cols() != dim {
        return Err(Error::config(format!("{what}: last axis is {}, expected {dim}", x.cols())));
    }
    Ok(x.len() / dim)
}

/// `W·v + b` for one row `v`.
fn affine(w: &Tensor, b: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..w.rows()).map(|i| b[i] + w.data()[i * n..(i + 1) * n].iter().zip(v).map(|(a, c)| a * c).sum::<f64>()).collect()
}

fn map_rows(x: &Tensor, dim: usize, what: &str, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Tensor> {
    let rows = rows_of(x, dim, what)?;
    let mut out = x.clone();
    for r in 0..rows {
        let y = f(&x.data()[r * dim..(r + 1) * dim]);
        out.data_mut()[r * dim..(r + 1) * dim].copy_from_slice(&y);
    }
    Ok(out)
}

/// Bottleneck residual `z + s·(W_up·gelu(W_down·z + b_down) + b_up)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterParams {
    pub w_down: Tensor,
    pub b_down: Tensor,
    pub w_up: Tensor,
    pub b_up: Tensor,
    pub scale: f64,
}

impl AdapterParams {
    pub fn fresh(dim: usize, width: usize, scale: f64, rng: &mut Prng) -> Self {
        Self {
            w_down: kaiming_uniform(width, dim, rng),
            b_down: Tensor::zeros(&[width]),
            w_up: Tensor::zeros(&[dim, width]),
            b_up: Tensor::zeros(&[dim]),
            scale,
        }
    }

    pub fn dim(&self) -> usize {
        self.w_down.cols()
    }

    pub fn width(&self) -> usize {
        self.w_down.rows()
    }

    pub fn store(&self, prefix: &str, s: &mut ParamStore) {
        s.insert(format!("{prefix}.w_down"), self.w_down.clone());
        s.insert(format!("{prefix}.b_down"), self.b_down.clone());
        s.insert(format!("{prefix}.w_up"), self.w_up.clone());
        s.insert(format!("{prefix}.b_up"), self.b_up.clone());
    }

    pub fn load(prefix: &str, s: &ParamStore, scale: f64) -> Result<Self> {
        Ok(Self {
            w_down: s.require(&format!("{prefix}.w_down"))?.clone(),
            b_down: s.require(&format!("{prefix}.b_down"))?.clone(),
            w_up: s.require(&format!("{prefix}.w_up"))?.clone(),
            b_up: s.require(&format!("{prefix}.b_up"))?.clone(),
            scale,
        })
    }
}

pub fn adapter_forward(z: &Tensor, p: &AdapterParams) -> Result<Tensor> {
    let dim = p.dim();
    map_rows(z, dim, "adapter", |v| {
        let h: Vec<f64> = affine(&p.w_down, p.b_down.data(), v).into_iter().map(gelu).collect();
        let u = affine(&p.w_up, p.b_up.data(), &h);
        v.iter().zip(u).map(|(a, b)| a + p.scale * b).collect()
    })
}

/// Low-rank correction `ΔW = α·B·A` with `A: r×d_in`, `B: d_out×r`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoraParams {
    pub a: Tensor,
    pub b: Tensor,
    pub alpha: f64,
}

impl LoraParams {
    /// `α = λ/r`; `A` Kaiming-uniform, `B` zero.
    pub fn fresh(d_out: usize, d_in: usize, rank: usize, lambda: f64, rng: &mut Prng) -> Result<Self> {
        if rank == 0 || rank > d_out.min(d_in) {
            return Err(Error::config(format!("lora rank {rank} must be in 1..={}", d_out.min(d_in))));
        }
        Ok(Self { a: kaiming_uniform(rank, d_in, rng), b: Tensor::zeros(&[d_out, rank]), alpha: lambda / rank as f64 })
    }

    pub fn delta(&self) -> Result<Tensor> {
        Ok(self.b.matmul(&self.a)?.scale(self.alpha))
    }
}

/// `w0·x + α·B·(A·x)` for a vector or a matrix of column vectors `x`.
pub fn lora_forward(x: &Tensor, w0: &Tensor, p: &LoraParams) -> Result<Tensor> {
    let r = p.a.rows();
    if r > w0.rows().min(w0.cols()) || p.b.cols() != r || p.a.cols() != w0.cols() || p.b.rows() != w0.rows() {
        return Err(Error::config(format!(
            "lora factors {:?}, {:?} do not fit weight {:?}",
            p.b.shape(),
            p.a.shape(),
            w0.shape()
        )));
    }
    let cols = if x.rank() == 1 { x.clone().reshape(&[x.len(), 1])? } else { x.clone() };
    let base = w0.matmul(&cols)?;
    let low = p.b.matmul(&p.a.matmul(&cols)?)?.scale(p.alpha);
    let y = base.add(&low)?;
    if x.rank() == 1 {
        y.reshape(&[w0.rows()])
    } else {
        Ok(y)
    }
}

/// Chebyshev-expansion up-projection: `α·Σ C_{k,i,n} T_n(tanh z_i) + x`, `z = tanh(W_down x + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebyshevParams {
    pub w_down: Tensor,
    pub b_down: Tensor,
    pub coef: Tensor,
    pub alpha: f64,
}

impl ChebyshevParams {
    pub fn fresh(dim: usize, width: usize, order: usize, rng: &mut Prng) -> Self {
        Self {
            w_down: kaiming_uniform(width, dim, rng),
            b_down: Tensor::zeros(&[width]),
            coef: Tensor::zeros(&[dim, width, order + 1]),
            alpha: 1.0,
        }
    }
}

/// `T_0..=T_order` at `t` by the three-term recurrence.
pub(crate) fn chebyshev_t(t: f64, order: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    if order >= 1 {
        out.push(t);
    }
    for n in 1..order {
        out.push(2.0 * t * out[n] - out[n - 1]);
    }
    out
}

pub fn chebyshev_adapter_forward(x: &Tensor, p: &ChebyshevParams) -> Result<Tensor> {
    let (dim, r, n1) = (p.coef.shape()[0], p.coef.shape()[1], p.coef.shape()[2]);
    map_rows(x, dim, "chebyshev adapter", |v| {
        let z: Vec<f64> = affine(&p.w_down, p.b_down.data(), v).into_iter().map(f64::tanh).collect();
        let t: Vec<Vec<f64>> = z.iter().map(|&zi| chebyshev_t(zi.tanh(), n1 - 1)).collect();
        (0..dim)
            .map(|k| {
                let mut y = 0.0;
                for (i, ti) in t.iter().enumerate().take(r) {
                    for (n, tn) in ti.iter().enumerate() {
                        y += p.coef.data()[(k * r + i) * n1 + n] * tn;
                    }
                }
                v[k] + p.alpha * y
            })
            .collect()
    })
}

/// Truncated Fourier-series up-projection followed by a learnable layer norm and gate.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierKanParams {
    pub w_down: Tensor,
    pub b_down: Tensor,
    pub coef_a: Tensor,
    pub coef_b: Tensor,
    pub ln_gamma: Tensor,
    pub ln_beta: Tensor,
    pub alpha: f64,
}

impl FourierKanParams {
    /// Gate at zero; series coefficients `N(0, (K·r)^{-1/2})` attenuated by `(n+1)^{-2}`.
    pub fn fresh(dim: usize, width: usize, order: usize, rng: &mut Prng) -> Self {
        let std = 1.0 / ((order * width) as f64).sqrt();
        let coef = |rng: &mut Prng| {
            Tensor::from_fn(&[dim, width, order], |i| rng.normal() * std / ((i[2] + 2) as f64).powi(2))
        };
        let coef_a = coef(rng);
        let coef_b = coef(rng);
        Self {
            w_down: kaiming_uniform(width, dim, rng),
            b_down: Tensor::zeros(&[width]),
            coef_a,
            coef_b,
            ln_gamma: Tensor::filled(&[dim], 1.0),
            ln_beta: Tensor::zeros(&[dim]),
            alpha: 0.0,
        }
    }
}

pub fn fourierkan_adapter_forward(x: &Tensor, p: &FourierKanParams) -> Result<Tensor> {
    let (dim, r, order) = (p.coef_a.shape()[0], p.coef_a.shape()[1], p.coef_a.shape()[2]);
    map_rows(x, dim, "fourierkan adapter", |v| {
        let z: Vec<f64> = affine(&p.w_down, p.b_down.data(), v).into_iter().map(gelu).collect();
        let y: Vec<f64> = (0..dim)
            .map(|k| {
                let mut acc = 0.0;
                for (i, &zi) in z.iter().enumerate().take(r) {
                    for n in 0..order {
                        let a = (n + 1) as f64 * zi;
                        let o = (k * r + i) * order + n;
                        acc += p.coef_a.data()[o] * a.cos() + p.coef_b.data()[o] * a.sin();
                    }
                }
                acc
            })
            .collect();
        let mean = y.iter().sum::<f64>() / dim as f64;
        let var = y.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / dim as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        (0..dim)
            .map(|k| v[k] + p.alpha * (p.ln_gamma.data()[k] * (y[k] - mean) * is + p.ln_beta.data()[k]))
            .collect()
    })
}

/// Bottleneck with the activation `a·sin z + b·cos z`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveActParams {
    pub w_down: Tensor,
    pub b_down: Tensor,
    pub w_up: Tensor,
    pub b_up: Tensor,
    pub wave_a: f64,
    pub wave_b: f64,
    pub alpha: f64,
}

impl WaveActParams {
    pub fn fresh(dim: usize, width: usize, rng: &mut Prng) -> Self {
        Self {
            w_down: kaiming_uniform(width, dim, rng),
            b_down: Tensor::zeros(&[width]),
            w_up: Tensor::zeros(&[dim, width]),
            b_up: Tensor::zeros(&[dim]),
            wave_a: 1.0,
            wave_b: 1.0,
            alpha: 1.0,
        }
    }
}

pub fn waveact_adapter_forward(x: &Tensor, p: &WaveActParams) -> Result<Tensor> {
    let dim = p.w_down.cols();
    map_rows(x, dim, "waveact adapter", |v| {
        let h: Vec<f64> = affine(&p.w_down, p.b_down.data(), v)
            .into_iter()
            .map(|z| p.wave_a * z.sin() + p.wave_b * z.cos())
            .collect();
        let u = affine(&p.w_up, p.b_up.data(), &h);
        v.iter().zip(u).map(|(a, b)| a + p.alpha * b).collect()
    })
}
