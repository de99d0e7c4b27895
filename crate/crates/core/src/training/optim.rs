use serde::{Deserialize, Serialize};

use crate::autodiff::{GradientSet, ParamStore};
use crate::error::{Error, Result};
use crate::Tensor;

fn d_lr() -> f64 {
    1e-3
}
fn d_b1() -> f64 {
    0.9
}
fn d_b2() -> f64 {
    0.999
}
fn d_eps() -> f64 {
    1e-8
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamWConfig {
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_b1")]
    pub beta1: f64,
    #[serde(default = "d_b2")]
    pub beta2: f64,
    #[serde(default = "d_eps")]
    pub eps: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: d_lr(), beta1: d_b1(), beta2: d_b2(), eps: d_eps(), weight_decay: 0.0 }
    }
}

/// First and second moments per parameter plus the step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimState {
    pub step: u64,
    pub m: ParamStore,
    pub v: ParamStore,
}

impl OptimState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One bias-corrected AdamW update of every parameter that has a gradient, at learning rate `lr`.
///
/// `p ← p − lr·(m̂/(√v̂ + ε) + wd·p)`. Non-finite gradients abort before any parameter moves.
pub fn adamw_step(params: &mut ParamStore, grads: &GradientSet, state: &mut OptimState, cfg: &AdamWConfig, lr: f64) -> Result<()> {
    for (name, g) in grads {
        let p = params.require(name)?;
        if p.shape() != g.shape() {
            return Err(Error::config(format!("gradient for `{name}` has shape {:?}, parameter {:?}", g.shape(), p.shape())));
        }
        if !g.is_finite() {
            return Err(Error::numeric(format!("non-finite gradient for parameter `{name}`")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (c1, c2) = (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t));
    for (name, g) in grads {
        let shape = g.shape().to_vec();
        if !state.m.contains(name) {
            state.m.insert(name.clone(), Tensor::zeros(&shape));
            state.v.insert(name.clone(), Tensor::zeros(&shape));
        }
        let m = state.m.get_mut(name).unwrap().data_mut();
        for (mi, gi) in m.iter_mut().zip(g.data()) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
        }
        let v = state.v.get_mut(name).unwrap().data_mut();
        for (vi, gi) in v.iter_mut().zip(g.data()) {
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
        }
        let m = state.m.get(name).unwrap().data();
        let v = state.v.get(name).unwrap().data();
        let p = params.get_mut(name).unwrap().data_mut();
        for i in 0..p.len() {
            let upd = (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.eps) + cfg.weight_decay * p[i];
            p[i] -= lr * upd;
        }
    }
    Ok(())
}
