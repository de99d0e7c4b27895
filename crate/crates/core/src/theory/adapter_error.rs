use std::f64::consts::PI;

use super::report::fit_slope;
use super::tail::lattice_tails;
use super::{BoundReport, TheoryConfig};
use crate::autodiff::{Graph, Op, ParamStore};
use crate::error::{Error, Result};
use crate::numerics::rfftn;
use crate::training::{adamw_step, AdamWConfig, OptimState};
use crate::{Prng, Tensor};

/// Observed `Σ_{⟨k⟩>K} ⟨k⟩^{−2α}` with `⟨k⟩ = (1+‖k‖²)^{1/2}`, summed over `|k_j| ≤ radius`.
pub fn truncation_tail_sum(dims: usize, alpha: f64, cutoff: usize, radius: i64) -> f64 {
    let k = cutoff as f64;
    let rho = (k * k - 1.0).max(0.0).sqrt();
    lattice_tails(dims, radius, &[rho], |n2| (1.0 + n2).powf(-alpha))[0]
}

/// Integral-comparison bound `S_d ∫_a^∞ (t + √d/2)^{d−1} t^{−2α} dt`, `a = √(K²−1) − √d`.
pub fn truncation_tail_bound(dims: usize, alpha: f64, cutoff: usize) -> Result<f64> {
    let d = dims as f64;
    if 2.0 * alpha <= d {
        return Err(Error::config(format!("tail bound needs alpha > d/2, got alpha={alpha}, d={dims}")));
    }
    let k = cutoff as f64;
    let a = (k * k - 1.0).sqrt() - d.sqrt();
    if a <= 0.0 {
        return Err(Error::config(format!("cutoff {cutoff} too small for the explicit bound in d={dims}")));
    }
    let p = 2.0 * alpha;
    match dims {
        1 => Ok(2.0 * a.powf(1.0 - p) / (p - 1.0)),
        2 => {
            let c = d.sqrt() / 2.0;
            Ok(2.0 * PI * (a.powf(2.0 - p) / (p - 2.0) + c * a.powf(1.0 - p) / (p - 1.0)))
        }
        _ => Err(Error::config(format!("tail bound supports d in {{1, 2}}, got {dims}"))),
    }
}

/// Smooth per-mode correction learned by the scalar adapters.
pub fn per_mode_target(z: f64) -> f64 {
    0.5 * (2.0 * z).sin() + 0.25 * z * z
}

/// Sup error on `[−1, 1]` of a width-`m` scalar adapter `Σ v_j gelu(w_j z + b_j) + c` trained on `target`.
pub fn train_scalar_adapter(width: usize, target: impl Fn(f64) -> f64, steps: usize, seed: u64) -> Result<f64> {
    Ok(train_scalar_adapter_from(None, width, target, steps, seed)?.0)
}

/// As [`train_scalar_adapter`], optionally continuing from a narrower trained adapter whose units are kept
/// and extended by fresh units with zero output weight. Returns the sup error and the trained parameters.
pub fn train_scalar_adapter_from(
    init: Option<&ParamStore>,
    width: usize,
    target: impl Fn(f64) -> f64,
    steps: usize,
    seed: u64,
) -> Result<(f64, ParamStore)> {
    let n = 256;
    let zs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
    let mut g = Graph::new();
    let x = g.input("z", &[n, 1])?;
    let t = g.input("t", &[n, 1])?;
    let w = g.param("w", &[1, width])?;
    let b = g.param("b", &[width])?;
    let v = g.param("v", &[width, 1])?;
    let c = g.param("c", &[1])?;
    let h = g.linear(x, w, Some(b))?;
    let h = g.gelu(h)?;
    let y = g.linear(h, v, Some(c))?;
    let loss = g.op(Op::MseLoss { pred: y, target: t })?;
    let mut rng = Prng::new(seed);
    let mut params = ParamStore::new();
    let mut w0: Vec<f64> = (0..width).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
    let mut b0: Vec<f64> = (0..width).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
    let mut v0 = vec![0.0; width];
    let mut c0 = 0.0;
    if let Some(p) = init {
        let prev = p.require("w")?.len();
        if prev > width {
            return Err(Error::config(format!("cannot continue a width-{prev} adapter at width {width}")));
        }
        w0[..prev].copy_from_slice(p.require("w")?.data());
        b0[..prev].copy_from_slice(p.require("b")?.data());
        v0[..prev].copy_from_slice(p.require("v")?.data());
        c0 = p.require("c")?.data()[0];
    }
    params.insert("w", Tensor::new(vec![1, width], w0)?);
    params.insert("b", Tensor::new(vec![width], b0)?);
    params.insert("v", Tensor::new(vec![width, 1], v0)?);
    params.insert("c", Tensor::new(vec![1], vec![c0])?);
    let mut feed = ParamStore::new();
    feed.insert("z", Tensor::new(vec![n, 1], zs.clone())?);
    feed.insert("t", Tensor::new(vec![n, 1], zs.iter().map(|&z| target(z)).collect())?);
    let opt = AdamWConfig { lr: 1e-2, ..AdamWConfig::default() };
    let mut state = OptimState::new();
    for step in 0..steps {
        g.forward(&[&feed, &params])?;
        let grads = g.backward(loss)?;
        let lr = opt.lr * 0.5 * (1.0 + (PI * step as f64 / steps as f64).cos());
        adamw_step(&mut params, &grads, &mut state, &opt, lr)?;
    }
    let (w, b, v, c) = (params.require("w")?, params.require("b")?, params.require("v")?, params.require("c")?.data()[0]);
    let mut sup = 0.0f64;
    for i in 0..=2000 {
        let z = -1.0 + i as f64 / 1000.0;
        let f: f64 = (0..width).map(|j| v.data()[j] * crate::autodiff::gelu(w.data()[j] * z + b.data()[j])).sum::<f64>() + c;
        sup = sup.max((f - target(z)).abs());
    }
    Ok((sup, params))
}

/// Spatial error of a perturbation supported on a `K^d` block of an `n^d` grid, against `√(K^d)·max|δ|`.
pub fn spatial_control_instance(dims: usize, n: usize, cutoff: usize, delta: impl FnMut(&[usize]) -> f64) -> Result<(f64, f64, f64)> {
    let mut delta = delta;
    let shape = vec![n; dims];
    let e = Tensor::from_fn(&shape, |i| if i.iter().all(|&j| j < cutoff) { delta(i) } else { 0.0 });
    let norm = e.frobenius_norm();
    let bound = (cutoff as f64).powi(dims as i32).sqrt() * e.max_abs();
    let spectral = rfftn(&e, &(0..dims).collect::<Vec<_>>())?.full_energy().sqrt();
    Ok((norm, bound, spectral))
}

#[derive(Clone, Debug)]
pub struct AdapterErrorReport {
    pub truncation: BoundReport,
    pub width: BoundReport,
    pub spatial_control: BoundReport,
}

impl AdapterErrorReport {
    pub fn passed(&self) -> bool {
        self.truncation.passed() && self.width.passed() && self.spatial_control.passed()
    }
}

fn width_chain(cfg: &TheoryConfig, seed: u64) -> Result<Vec<f64>> {
    let mut prev: Option<ParamStore> = None;
    let mut out = Vec::with_capacity(cfg.widths.len());
    for &m in &cfg.widths {
        let (e, p) = train_scalar_adapter_from(prev.as_ref(), m, per_mode_target, cfg.adapter_steps, cfg.seed ^ (seed << 32) ^ m as u64)?;
        out.push(e);
        prev = Some(p);
    }
    Ok(out)
}

/// Truncation tail against its explicit bound, the width term `ε(m)` over seeds, and the spatial control of per-mode errors.
pub fn verify_adapter_error_decomposition(cfg: &TheoryConfig) -> Result<AdapterErrorReport> {
    let d = cfg.dims;
    let mut truncation = BoundReport::new(&format!("adapter-error/truncation d={d} alpha={}", cfg.alpha));
    let radius = if d == 1 { 1 << 16 } else { 2048 };
    for k in [4usize, 8, 16, 32, 64] {
        let obs = truncation_tail_sum(d, cfg.alpha, k, radius);
        let bound = truncation_tail_bound(d, cfg.alpha, k)?;
        truncation.check(obs, bound, 0.0, false, format!("K={k}"));
    }

    let mut width = BoundReport::new("adapter-error/width");
    let mut all_rates = Vec::new();
    for seed in 0..cfg.width_seeds as u64 {
        let eps: Vec<f64> = if cfg.width_continuation {
            width_chain(cfg, seed)?
        } else {
            cfg
            .widths
            .iter()
            .map(|&m| {
                (0..cfg.adapter_restarts.max(1) as u64)
                    .map(|r| train_scalar_adapter(m, per_mode_target, cfg.adapter_steps, cfg.seed ^ (seed << 32) ^ (r << 16) ^ m as u64))
                    .try_fold(f64::INFINITY, |best, e| e.map(|e| best.min(e)))
            })
            .collect::<Result<_>>()?
        };
        for (i, w) in eps.windows(2).enumerate() {
            width.check(w[1], w[0], 0.0, false, format!("seed {seed}: eps(m={}) < eps(m={})", cfg.widths[i + 1], cfg.widths[i]));
            if let Some(last) = width.trials.last_mut() {
                last.pass &= w[1] < w[0];
            }
        }
        let xs: Vec<f64> = cfg.widths.iter().map(|&m| m as f64).collect();
        let ys: Vec<f64> = eps.iter().map(|e| e.max(1e-300).ln()).collect();
        let rate = -fit_slope(&xs, &ys);
        all_rates.push(rate);
        for (m, e) in cfg.widths.iter().zip(&eps) {
            width.metrics.insert(format!("seed{seed}_eps_m{m}"), *e);
        }
        width.metrics.insert(format!("seed{seed}_rate"), rate);
    }
    width.metrics.insert("rate_mean".into(), all_rates.iter().sum::<f64>() / all_rates.len().max(1) as f64);
    width.caveats.push(
        "eps(m) is measured on one smooth target family; uniform accuracy for arbitrary low-frequency components is an assumption not checked here".into(),
    );

    let mut spatial_control = BoundReport::new("adapter-error/spatial-control");
    let (n, k) = (32, 8);
    let mut rng = Prng::new(cfg.seed);
    for _ in 0..100 {
        let eps = rng.uniform_in(0.01, 1.0);
        let (norm, bound, spectral) = spatial_control_instance(d, n, k, |_| rng.uniform_in(-eps, eps))?;
        let ok = (norm - spectral).abs() <= 1e-10 * norm.max(1.0);
        spatial_control.check(norm, bound, 1e-12 * bound, false, "random perturbation");
        if let Some(last) = spatial_control.trials.last_mut() {
            last.pass &= ok;
        }
    }
    let (norm, bound, _) = spatial_control_instance(d, n, k, |_| 0.25)?;
    spatial_control.check(norm, bound, 0.0, false, "equality case");
    if let Some(last) = spatial_control.trials.last_mut() {
        last.pass &= (norm - bound).abs() <= 1e-14 * bound;
        last.margin = -(norm - bound).abs();
    }
    Ok(AdapterErrorReport { truncation, width, spatial_control })
}
