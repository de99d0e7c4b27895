use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::adapter::{ChebyshevParams, FourierKanParams, LoraParams, WaveActParams, LN_EPS};
use super::schedule::{count_params_eq13, BandSchedule};
use super::AdapterParams;
use crate::autodiff::{Graph, NodeId, Op, ParamStore};
use crate::backbone::BackboneConfig;
use crate::error::{Error, Result};
use crate::{Prng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeftKind {
    Lora,
    BlockwiseLora,
    Adapter,
    FAdapter,
    FInverseAdapter,
    Chebyshev,
    Fourierkan,
    Waveact,
    Full,
}

impl PeftKind {
    pub const ALL: [PeftKind; 9] = [
        PeftKind::Lora,
        PeftKind::BlockwiseLora,
        PeftKind::Adapter,
        PeftKind::FAdapter,
        PeftKind::FInverseAdapter,
        PeftKind::Chebyshev,
        PeftKind::Fourierkan,
        PeftKind::Waveact,
        PeftKind::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PeftKind::Lora => "lora",
            PeftKind::BlockwiseLora => "blockwise-lora",
            PeftKind::Adapter => "adapter",
            PeftKind::FAdapter => "f-adapter",
            PeftKind::FInverseAdapter => "f-inverse-adapter",
            PeftKind::Chebyshev => "chebyshev",
            PeftKind::Fourierkan => "fourierkan",
            PeftKind::Waveact => "waveact",
            PeftKind::Full => "full",
        }
    }

    /// Kinds that place in/mid/out adapters on every (layer, block, band).
    pub fn is_spectral_adapter(self) -> bool {
        matches!(
            self,
            PeftKind::Adapter
                | PeftKind::FAdapter
                | PeftKind::FInverseAdapter
                | PeftKind::Chebyshev
                | PeftKind::Fourierkan
                | PeftKind::Waveact
        )
    }
}

impl fmt::Display for PeftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PeftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PeftKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = PeftKind::ALL.iter().map(|k| k.name()).collect();
            Error::Usage(format!("unknown PEFT kind `{s}`; expected one of: {}", names.join(", ")))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    In,
    Mid,
    Out,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::In, Stage::Mid, Stage::Out];

    fn name(self) -> &'static str {
        match self {
            Stage::In => "in",
            Stage::Mid => "mid",
            Stage::Out => "out",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterSlot {
    pub layer: usize,
    pub block: usize,
    pub band: usize,
    pub stage: Stage,
    pub dim: usize,
    pub width: usize,
    pub prefix: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoraSlot {
    /// Backbone tensor the correction is added to.
    pub target: String,
    /// Channel block for block-wise corrections of stacked `[K, ·, ·]` kernels.
    pub block: Option<usize>,
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub alpha: f64,
    pub prefix: String,
}

fn d_r_min() -> f64 {
    4.0
}
fn d_r_max() -> f64 {
    16.0
}
fn d_p() -> f64 {
    2.0
}
fn d_bands() -> usize {
    4
}
fn d_one() -> f64 {
    1.0
}
fn d_rank() -> usize {
    4
}
fn d_order() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeftConfig {
    pub kind: PeftKind,
    #[serde(default = "d_r_min")]
    pub r_min: f64,
    #[serde(default = "d_r_max")]
    pub r_max: f64,
    #[serde(default = "d_p")]
    pub p: f64,
    #[serde(default = "d_bands")]
    pub bands: usize,
    /// Uniform width of the vanilla adapter; defaults to the rounded mean of the frequency-adaptive widths.
    #[serde(default)]
    pub adapter_width: Option<usize>,
    #[serde(default = "d_one")]
    pub scale: f64,
    #[serde(default = "d_rank")]
    pub lora_rank: usize,
    /// LoRA `λ`; `α = λ/r`. Defaults to the rank, giving `α = 1`.
    #[serde(default)]
    pub lora_lambda: Option<f64>,
    /// Chebyshev degree `N` or Fourier series order `K` of the variant adapters.
    #[serde(default = "d_order")]
    pub series_order: usize,
    #[serde(default)]
    pub seed: u64,
}

impl PeftConfig {
    pub fn new(kind: PeftKind) -> Self {
        Self {
            kind,
            r_min: d_r_min(),
            r_max: d_r_max(),
            p: d_p(),
            bands: d_bands(),
            adapter_width: None,
            scale: 1.0,
            lora_rank: d_rank(),
            lora_lambda: None,
            series_order: d_order(),
            seed: 0,
        }
    }

    pub fn schedule(&self, modes: usize) -> Result<BandSchedule> {
        let inverse = self.kind == PeftKind::FInverseAdapter;
        let s = BandSchedule::new(modes, self.bands, self.r_min, self.r_max, self.p, inverse)?;
        if self.kind == PeftKind::Adapter {
            let mean = s.widths.iter().sum::<usize>() as f64 / s.bands as f64;
            return Ok(s.uniform(self.adapter_width.unwrap_or(mean.round() as usize)));
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeftManifest {
    pub kind: PeftKind,
    pub schedule: Option<BandSchedule>,
    pub scale: f64,
    pub series_order: usize,
    pub adapters: Vec<AdapterSlot>,
    pub lora: Vec<LoraSlot>,
}

impl PeftManifest {
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for a in &self.adapters {
            let (d, r, p) = (a.dim, a.width, &a.prefix);
            let mut push = |n: &str, s: Vec<usize>| out.push((format!("{p}.{n}"), s));
            push("w_down", vec![r, d]);
            push("b_down", vec![r]);
            match self.kind {
                PeftKind::Chebyshev => {
                    push("coef", vec![d, r, self.series_order + 1]);
                    push("alpha", vec![1]);
                }
                PeftKind::Fourierkan => {
                    push("coef_a", vec![d, r, self.series_order]);
                    push("coef_b", vec![d, r, self.series_order]);
                    push("ln_gamma", vec![d]);
                    push("ln_beta", vec![d]);
                    push("alpha", vec![1]);
                }
                PeftKind::Waveact => {
                    push("w_up", vec![d, r]);
                    push("b_up", vec![d]);
                    push("wave_a", vec![1]);
                    push("wave_b", vec![1]);
                    push("alpha", vec![1]);
                }
                _ => {
                    push("w_up", vec![d, r]);
                    push("b_up", vec![d]);
                }
            }
        }
        for l in &self.lora {
            out.push((format!("{}.a", l.prefix), vec![l.rank, l.cols]));
            out.push((format!("{}.b", l.prefix), vec![l.rows, l.rank]));
        }
        out
    }

    /// Trainable entries enumerated from the manifest tensors.
    pub fn trainable_count(&self) -> usize {
        self.tensor_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    /// Closed-form count for the adapter family over all layers, when a schedule is attached.
    pub fn eq13_count(&self, cfg: &BackboneConfig) -> Option<u64> {
        let s = self.schedule.as_ref()?;
        Some(cfg.layers as u64 * count_params_eq13(cfg.block_width(), cfg.blocks, cfg.temporal_modes, &s.widths))
    }

    pub fn adapter(&self, layer: usize, block: usize, band: usize, stage: Stage) -> Option<&AdapterSlot> {
        self.adapters.iter().find(|a| a.layer == layer && a.block == block && a.band == band && a.stage == stage)
    }

    pub fn lora_for<'a>(&'a self, target: &'a str, block: Option<usize>) -> impl Iterator<Item = &'a LoraSlot> + 'a {
        self.lora.iter().filter(move |l| l.target == target && l.block == block)
    }

    pub fn validate(&self, cfg: &BackboneConfig) -> Result<()> {
        for a in &self.adapters {
            if a.layer >= cfg.layers || a.block >= cfg.blocks {
                return Err(Error::config(format!(
                    "adapter `{}` references layer {} block {} absent from a {}-layer, {}-block backbone",
                    a.prefix, a.layer, a.block, cfg.layers, cfg.blocks
                )));
            }
            let bands = self.schedule.as_ref().map_or(0, |s| s.bands);
            if a.band >= bands {
                return Err(Error::config(format!("adapter `{}` references band {} of {bands}", a.prefix, a.band)));
            }
        }
        if let Some(s) = &self.schedule {
            if s.modes > cfg.modes || s.boundaries.last() != Some(&s.modes) {
                return Err(Error::config(format!("band boundaries {:?} exceed retained modes {}", s.boundaries, cfg.modes)));
            }
        }
        let params = cfg.param_shapes();
        for l in &self.lora {
            let Some((_, shape)) = params.iter().find(|(n, _)| *n == l.target) else {
                return Err(Error::config(format!("lora target `{}` is not a backbone tensor", l.target)));
            };
            let (rows, cols) = match l.block {
                Some(k) if shape.len() == 3 && k < shape[0] => (shape[1], shape[2]),
                None if shape.len() == 2 => (shape[0], shape[1]),
                None if shape.len() == 3 => (shape[0] * shape[1], shape[0] * shape[2]),
                _ => return Err(Error::config(format!("lora slot `{}` does not fit `{}`", l.prefix, l.target))),
            };
            if (rows, cols) != (l.rows, l.cols) {
                return Err(Error::config(format!("lora slot `{}` has wrong dimensions", l.prefix)));
            }
        }
        Ok(())
    }
}

fn lora_targets(cfg: &BackboneConfig) -> Vec<(String, usize, usize)> {
    let (c, ch) = (cfg.width, cfg.width * cfg.temporal_modes);
    let mut out = Vec::new();
    for l in 0..cfg.layers {
        for (w, rows, cols) in [("w1", c, ch), ("w2", ch, c)] {
            for part in ["re", "im"] {
                out.push((format!("layers.{l}.{w}.{part}"), rows, cols));
            }
        }
        if cfg.pointwise_mlp {
            out.push((format!("layers.{l}.mlp.w1"), c, c));
            out.push((format!("layers.{l}.mlp.w2"), c, c));
        }
    }
    out
}

fn blockwise_targets(cfg: &BackboneConfig) -> Vec<(String, usize, usize, usize)> {
    let (d, dh) = (cfg.block_width(), cfg.block_width() * cfg.temporal_modes);
    let mut out = Vec::new();
    for l in 0..cfg.layers {
        for (w, rows, cols) in [("w1", d, dh), ("w2", dh, d)] {
            for part in ["re", "im"] {
                for k in 0..cfg.blocks {
                    out.push((format!("layers.{l}.{w}.{part}"), k, rows, cols));
                }
            }
        }
    }
    out
}

/// Trainable count of a LoRA attachment of rank `r`.
fn lora_count(cfg: &BackboneConfig, blockwise: bool, r: usize) -> usize {
    if blockwise {
        blockwise_targets(cfg).iter().map(|t| r * (t.2 + t.3)).sum()
    } else {
        lora_targets(cfg).iter().map(|t| r * (t.1 + t.2)).sum()
    }
}

/// Rank whose trainable count is closest to `budget`.
pub fn matched_lora_rank(cfg: &BackboneConfig, blockwise: bool, budget: usize) -> usize {
    let max_r = if blockwise { cfg.block_width() } else { cfg.width };
    (1..=max_r)
        .min_by_key(|&r| (lora_count(cfg, blockwise, r) as i64 - budget as i64).unsigned_abs())
        .unwrap_or(1)
}

/// Builds the manifest and freshly initialized attachment tensors for `peft` on `cfg`.
pub fn attach(cfg: &BackboneConfig, peft: &PeftConfig) -> Result<(PeftManifest, ParamStore)> {
    cfg.validate()?;
    let mut rng = Prng::new(peft.seed);
    let mut store = ParamStore::new();
    let mut manifest = PeftManifest {
        kind: peft.kind,
        schedule: None,
        scale: peft.scale,
        series_order: peft.series_order,
        adapters: Vec::new(),
        lora: Vec::new(),
    };
    match peft.kind {
        PeftKind::Full => {}
        PeftKind::Lora | PeftKind::BlockwiseLora => {
            let r = peft.lora_rank;
            let lambda = peft.lora_lambda.unwrap_or(r as f64);
            let slots: Vec<(String, Option<usize>, usize, usize)> = if peft.kind == PeftKind::Lora {
                lora_targets(cfg).into_iter().map(|(t, a, b)| (t, None, a, b)).collect()
            } else {
                blockwise_targets(cfg).into_iter().map(|(t, k, a, b)| (t, Some(k), a, b)).collect()
            };
            for (target, block, rows, cols) in slots {
                let p = LoraParams::fresh(rows, cols, r, lambda, &mut rng)?;
                let prefix = match block {
                    Some(k) => format!("peft.lora.{target}.k{k}"),
                    None => format!("peft.lora.{target}"),
                };
                store.insert(format!("{prefix}.a"), p.a);
                store.insert(format!("{prefix}.b"), p.b);
                manifest.lora.push(LoraSlot { target, block, rows, cols, rank: r, alpha: p.alpha, prefix });
            }
        }
        kind => {
            let schedule = peft.schedule(cfg.modes)?;
            let (d, dh) = (cfg.block_width(), cfg.block_width() * cfg.temporal_modes);
            for layer in 0..cfg.layers {
                for block in 0..cfg.blocks {
                    for (band, &width) in schedule.widths.iter().enumerate() {
                        if width == 0 {
                            continue;
                        }
                        for stage in Stage::ALL {
                            let dim = if stage == Stage::Mid { dh } else { d };
                            let prefix = format!("peft.l{layer}.k{block}.b{band}.{}", stage.name());
                            init_adapter(kind, &prefix, dim, width, peft, &mut rng, &mut store);
                            manifest.adapters.push(AdapterSlot { layer, block, band, stage, dim, width, prefix });
                        }
                    }
                }
            }
            manifest.schedule = Some(schedule);
        }
    }
    manifest.validate(cfg)?;
    Ok((manifest, store))
}

fn init_adapter(kind: PeftKind, prefix: &str, dim: usize, width: usize, peft: &PeftConfig, rng: &mut Prng, s: &mut ParamStore) {
    let put = |s: &mut ParamStore, n: &str, t: Tensor| s.insert(format!("{prefix}.{n}"), t);
    match kind {
        PeftKind::Chebyshev => {
            let p = ChebyshevParams::fresh(dim, width, peft.series_order, rng);
            put(s, "w_down", p.w_down);
            put(s, "b_down", p.b_down);
            put(s, "coef", p.coef);
            put(s, "alpha", Tensor::scalar(p.alpha));
        }
        PeftKind::Fourierkan => {
            let p = FourierKanParams::fresh(dim, width, peft.series_order.max(1), rng);
            put(s, "w_down", p.w_down);
            put(s, "b_down", p.b_down);
            put(s, "coef_a", p.coef_a);
            put(s, "coef_b", p.coef_b);
            put(s, "ln_gamma", p.ln_gamma);
            put(s, "ln_beta", p.ln_beta);
            put(s, "alpha", Tensor::scalar(p.alpha));
        }
        PeftKind::Waveact => {
            let p = WaveActParams::fresh(dim, width, rng);
            put(s, "w_down", p.w_down);
            put(s, "b_down", p.b_down);
            put(s, "w_up", p.w_up);
            put(s, "b_up", p.b_up);
            put(s, "wave_a", Tensor::scalar(p.wave_a));
            put(s, "wave_b", Tensor::scalar(p.wave_b));
            put(s, "alpha", Tensor::scalar(p.alpha));
        }
        _ => AdapterParams::fresh(dim, width, peft.scale, rng).store(prefix, s),
    }
}

/// `x_rows · Wᵀ + b` with `W: [out, in]` stored under `prefix.w_name`.
fn dense_t(g: &mut Graph, x: NodeId, prefix: &str, w: &str, b: &str, out: usize, inp: usize) -> Result<NodeId> {
    let wn = g.param(&format!("{prefix}.{w}"), &[out, inp])?;
    let wt = g.op(Op::Transpose(wn))?;
    let bn = g.param(&format!("{prefix}.{b}"), &[out])?;
    g.linear(x, wt, Some(bn))
}

/// Stacks `[n, r]` feature maps into `[n, r·m]` with feature index `i·m + j`.
fn interleave(g: &mut Graph, feats: Vec<NodeId>, n: usize, r: usize) -> Result<NodeId> {
    let m = feats.len();
    let cols: Vec<NodeId> = feats.into_iter().map(|f| g.reshape(f, &[n, r, 1])).collect::<Result<_>>()?;
    let st = g.concat(cols, 2)?;
    g.reshape(st, &[n, r * m])
}

/// Graph form of the adapter at `slot`, applied to row matrix `x: [n, dim]`.
pub fn build_adapter(g: &mut Graph, m: &PeftManifest, slot: &AdapterSlot, x: NodeId) -> Result<NodeId> {
    let (d, r, p) = (slot.dim, slot.width, slot.prefix.as_str());
    let n = g.shape(x)[0];
    match m.kind {
        PeftKind::Chebyshev => {
            let z = dense_t(g, x, p, "w_down", "b_down", r, d)?;
            let z = g.op(Op::Tanh(z))?;
            let t = g.op(Op::Tanh(z))?;
            let mut ts = vec![g.constant(Tensor::filled(&[n, r], 1.0))];
            if m.series_order >= 1 {
                ts.push(t);
            }
            for k in 1..m.series_order {
                let a = g.mul(t, ts[k])?;
                let a = g.scale(a, 2.0)?;
                let next = g.sub(a, ts[k - 1])?;
                ts.push(next);
            }
            let n1 = ts.len();
            let feats = interleave(g, ts, n, r)?;
            let c = g.param(&format!("{p}.coef"), &[d, r, n1])?;
            let c = g.reshape(c, &[d, r * n1])?;
            let ct = g.op(Op::Transpose(c))?;
            let y = g.matmul(feats, ct)?;
            let alpha = g.param(&format!("{p}.alpha"), &[1])?;
            let y = g.op(Op::MulScalar(y, alpha))?;
            g.add(x, y)
        }
        PeftKind::Fourierkan => {
            let order = m.series_order.max(1);
            let z = dense_t(g, x, p, "w_down", "b_down", r, d)?;
            let z = g.gelu(z)?;
            let mut cs = Vec::with_capacity(order);
            let mut ss = Vec::with_capacity(order);
            for k in 1..=order {
                let zk = if k == 1 { z } else { g.scale(z, k as f64)? };
                cs.push(g.op(Op::Cos(zk))?);
                ss.push(g.op(Op::Sin(zk))?);
            }
            let fc = interleave(g, cs, n, r)?;
            let fs = interleave(g, ss, n, r)?;
            let proj = |g: &mut Graph, name: &str, f: NodeId| -> Result<NodeId> {
                let c = g.param(&format!("{p}.{name}"), &[d, r, order])?;
                let c = g.reshape(c, &[d, r * order])?;
                let ct = g.op(Op::Transpose(c))?;
                g.matmul(f, ct)
            };
            let ya = proj(g, "coef_a", fc)?;
            let yb = proj(g, "coef_b", fs)?;
            let y = g.add(ya, yb)?;
            let ln = g.op(Op::LayerNorm { x: y, eps: LN_EPS })?;
            let gam = g.param(&format!("{p}.ln_gamma"), &[d])?;
            let bet = g.param(&format!("{p}.ln_beta"), &[d])?;
            let ln = g.op(Op::MulBias(ln, gam))?;
            let ln = g.op(Op::AddBias(ln, bet))?;
            let alpha = g.param(&format!("{p}.alpha"), &[1])?;
            let y = g.op(Op::MulScalar(ln, alpha))?;
            g.add(x, y)
        }
        PeftKind::Waveact => {
            let z = dense_t(g, x, p, "w_down", "b_down", r, d)?;
            let s = g.op(Op::Sin(z))?;
            let c = g.op(Op::Cos(z))?;
            let a = g.param(&format!("{p}.wave_a"), &[1])?;
            let b = g.param(&format!("{p}.wave_b"), &[1])?;
            let s = g.op(Op::MulScalar(s, a))?;
            let c = g.op(Op::MulScalar(c, b))?;
            let h = g.add(s, c)?;
            let u = dense_t(g, h, p, "w_up", "b_up", d, r)?;
            let alpha = g.param(&format!("{p}.alpha"), &[1])?;
            let u = g.op(Op::MulScalar(u, alpha))?;
            g.add(x, u)
        }
        _ => {
            let h = dense_t(g, x, p, "w_down", "b_down", r, d)?;
            let h = g.gelu(h)?;
            let u = dense_t(g, h, p, "w_up", "b_up", d, r)?;
            let u = if m.scale == 1.0 { u } else { g.scale(u, m.scale)? };
            g.add(x, u)
        }
    }
}

/// `α·B·A` for a LoRA slot, as a `[rows, cols]` node.
pub fn lora_delta(g: &mut Graph, slot: &LoraSlot) -> Result<NodeId> {
    let a = g.param(&format!("{}.a", slot.prefix), &[slot.rank, slot.cols])?;
    let b = g.param(&format!("{}.b", slot.prefix), &[slot.rows, slot.rank])?;
    let ba = g.matmul(b, a)?;
    g.scale(ba, slot.alpha)
}
