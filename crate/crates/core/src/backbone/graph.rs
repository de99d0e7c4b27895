use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::BackboneConfig;
use crate::autodiff::{Graph, NodeId, Op};
use crate::error::{Error, Result};
use crate::numerics::for_each_index;
use crate::peft::{build_adapter, lora_delta, PeftManifest, Stage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    L2re,
}

/// Rectangular piece of the retained corner, with the band whose adapters act on it.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub ranges: Vec<Range<usize>>,
    pub band: Option<usize>,
}

/// Partition of `[0, M)^D` into band cells. Without boundaries the corner is one unadapted cell.
pub fn corner_cells(dims: usize, modes: usize, boundaries: Option<&[usize]>, annulus: bool) -> Vec<Cell> {
    let Some(bd) = boundaries else {
        return vec![Cell { ranges: vec![0..modes; dims], band: None }];
    };
    let nb = bd.len() - 1;
    let mut cells = Vec::new();
    for_each_index(&vec![nb; dims], |idx| {
        let ranges = idx.iter().map(|&b| bd[b]..bd[b + 1]).collect();
        let lo = *idx.iter().min().unwrap();
        let hi = *idx.iter().max().unwrap();
        let band = if annulus || lo == hi { Some(hi) } else { None };
        cells.push(Cell { ranges, band });
    });
    cells
}

/// Model graph for a fixed batch size. Leaves: `input`, optional `target`, and named parameters.
pub struct ModelGraph {
    pub graph: Graph,
    pub input: NodeId,
    pub output: NodeId,
    pub target: Option<NodeId>,
    pub loss: Option<NodeId>,
    pub batch: usize,
}

struct Builder<'a> {
    g: Graph,
    cfg: &'a BackboneConfig,
    peft: Option<&'a PeftManifest>,
}

impl Builder<'_> {
    fn lora_sum(&mut self, base: NodeId, target: &str, block: Option<usize>) -> Result<NodeId> {
        let Some(m) = self.peft else { return Ok(base) };
        let slots: Vec<_> = m.lora_for(target, block).cloned().collect();
        let mut w = base;
        for s in &slots {
            let d = lora_delta(&mut self.g, s)?;
            w = self.g.add(w, d)?;
        }
        Ok(w)
    }

    /// Block-diagonal `[C·rows/d, ...]` matrix assembled from a stacked `[K, rows, cols]` kernel.
    fn kernel_matrix(&mut self, name: &str, rows: usize, cols: usize) -> Result<NodeId> {
        let k = self.cfg.blocks;
        let stacked = self.g.param(name, &[k, rows, cols])?;
        let mut full: Option<NodeId> = None;
        for b in 0..k {
            let blk = self.g.slice(stacked, vec![b..b + 1, 0..rows, 0..cols])?;
            let blk = self.g.reshape(blk, &[rows, cols])?;
            let blk = self.lora_sum(blk, name, Some(b))?;
            let placed = if k == 1 {
                blk
            } else {
                self.g.op(Op::Scatter {
                    x: blk,
                    ranges: vec![b * rows..(b + 1) * rows, b * cols..(b + 1) * cols],
                    shape: vec![k * rows, k * cols],
                })?
            };
            full = Some(match full {
                None => placed,
                Some(f) => self.g.add(f, placed)?,
            });
        }
        self.lora_sum(full.unwrap(), name, None)
    }

    /// Applies the per-block adapters of `stage` to packed rows `z: [2, P, K·dd]`.
    fn stage(&mut self, z: NodeId, layer: usize, band: Option<usize>, stage: Stage) -> Result<NodeId> {
        let (Some(m), Some(b)) = (self.peft, band) else { return Ok(z) };
        if m.adapters.is_empty() {
            return Ok(z);
        }
        let s = self.g.shape(z).to_vec();
        let (p, c) = (s[1], s[2]);
        let k = self.cfg.blocks;
        let dd = c / k;
        let mut parts = Vec::with_capacity(k);
        for blk in 0..k {
            let zk = self.g.slice(z, vec![0..2, 0..p, blk * dd..(blk + 1) * dd])?;
            let out = match m.adapter(layer, blk, b, stage) {
                Some(slot) => {
                    let rows = self.g.reshape(zk, &[2 * p, dd])?;
                    let y = build_adapter(&mut self.g, m, slot, rows)?;
                    self.g.reshape(y, &[2, p, dd])?
                }
                None => zk,
            };
            parts.push(out);
        }
        self.g.concat(parts, 2)
    }

    fn pointwise(&mut self, x: NodeId, w: NodeId, b: NodeId, rows: usize, cin: usize, out_shape: &[usize]) -> Result<NodeId> {
        let flat = self.g.reshape(x, &[rows, cin])?;
        let y = self.g.linear(flat, w, Some(b))?;
        self.g.reshape(y, out_shape)
    }

    fn spectral_layer(&mut self, z: NodeId, l: usize, batch: usize) -> Result<NodeId> {
        let cfg = self.cfg;
        let (c, d) = (cfg.width, cfg.block_width());
        let dh = d * cfg.temporal_modes;
        let dims = cfg.spatial_dims();
        let axes: Vec<usize> = (1..=dims).collect();
        let mut src = vec![batch];
        src.extend_from_slice(&cfg.grid);
        src.push(c);
        let x = self.g.op(Op::Rfftn { x: z, axes: axes.clone() })?;
        let packed = self.g.shape(x).to_vec();
        let w1r = self.kernel_matrix(&format!("layers.{l}.w1.re"), d, dh)?;
        let w1i = self.kernel_matrix(&format!("layers.{l}.w1.im"), d, dh)?;
        let w2r = self.kernel_matrix(&format!("layers.{l}.w2.re"), dh, d)?;
        let w2i = self.kernel_matrix(&format!("layers.{l}.w2.im"), dh, d)?;
        let schedule = self.peft.and_then(|m| if m.adapters.is_empty() { None } else { m.schedule.as_ref() });
        let cells = corner_cells(dims, cfg.modes, schedule.map(|s| s.boundaries.as_slice()), cfg.annulus_bands);
        let mut total: Option<NodeId> = None;
        for cell in &cells {
            let mut ranges = vec![0..2, 0..batch];
            ranges.extend(cell.ranges.iter().cloned());
            ranges.push(0..c);
            let p: usize = batch * cell.ranges.iter().map(|r| r.len()).product::<usize>();
            let zc = self.g.slice(x, ranges.clone())?;
            let zc = self.g.reshape(zc, &[2, p, c])?;
            let zc = self.stage(zc, l, cell.band, Stage::In)?;
            let u = self.g.complex_mix(zc, w1r, w1i)?;
            let u = if cfg.kernel_activation { self.g.gelu(u)? } else { u };
            let u = self.stage(u, l, cell.band, Stage::Mid)?;
            let v = self.g.complex_mix(u, w2r, w2i)?;
            let v = self.stage(v, l, cell.band, Stage::Out)?;
            let mut block_shape = vec![2, batch];
            block_shape.extend(cell.ranges.iter().map(|r| r.len()));
            block_shape.push(c);
            let v = self.g.reshape(v, &block_shape)?;
            let placed = self.g.op(Op::Scatter { x: v, ranges, shape: packed.clone() })?;
            total = Some(match total {
                None => placed,
                Some(t) => self.g.add(t, placed)?,
            });
        }
        let y = self.g.op(Op::Irfftn { x: total.unwrap(), axes, source_shape: src.clone() })?;
        let h = if cfg.pointwise_mlp {
            let rows = batch * cfg.points();
            let w1 = self.g.param(&format!("layers.{l}.mlp.w1"), &[c, c])?;
            let w1 = self.lora_sum(w1, &format!("layers.{l}.mlp.w1"), None)?;
            let b1 = self.g.param(&format!("layers.{l}.mlp.b1"), &[c])?;
            let w2 = self.g.param(&format!("layers.{l}.mlp.w2"), &[c, c])?;
            let w2 = self.lora_sum(w2, &format!("layers.{l}.mlp.w2"), None)?;
            let b2 = self.g.param(&format!("layers.{l}.mlp.b2"), &[c])?;
            let flat = self.g.reshape(y, &[rows, c])?;
            let a = self.g.linear(flat, w1, Some(b1))?;
            let a = self.g.gelu(a)?;
            let a = self.g.linear(a, w2, Some(b2))?;
            self.g.reshape(a, &src)?
        } else {
            y
        };
        self.g.add(z, h)
    }
}

/// Builds the forward graph (and optionally a loss against `target`) for `batch` samples.
pub fn build_model_graph(
    cfg: &BackboneConfig,
    peft: Option<&PeftManifest>,
    batch: usize,
    loss: Option<LossKind>,
) -> Result<ModelGraph> {
    cfg.validate()?;
    if batch == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    if let Some(m) = peft {
        m.validate(cfg)?;
    }
    let mut b = Builder { g: Graph::new(), cfg, peft };
    let mut in_shape = vec![batch];
    in_shape.extend_from_slice(&cfg.grid);
    let mut lat_shape = in_shape.clone();
    let mut out_shape = in_shape.clone();
    in_shape.push(cfg.in_channels);
    lat_shape.push(cfg.width);
    out_shape.push(cfg.out_channels);
    let rows = batch * cfg.points();
    let input = b.g.input("input", &in_shape)?;
    let lw = b.g.param("lift.weight", &[cfg.in_channels, cfg.width])?;
    let lb = b.g.param("lift.bias", &[cfg.width])?;
    let mut z = b.pointwise(input, lw, lb, rows, cfg.in_channels, &lat_shape)?;
    for l in 0..cfg.layers {
        z = b.spectral_layer(z, l, batch)?;
    }
    let pw = b.g.param("project.weight", &[cfg.width, cfg.out_channels])?;
    let pb = b.g.param("project.bias", &[cfg.out_channels])?;
    let output = b.pointwise(z, pw, pb, rows, cfg.width, &out_shape)?;
    let (target, loss) = match loss {
        None => (None, None),
        Some(kind) => {
            let t = b.g.input("target", &out_shape)?;
            let op = match kind {
                LossKind::Mse => Op::MseLoss { pred: output, target: t },
                LossKind::L2re => Op::L2reLoss { pred: output, target: t },
            };
            (Some(t), Some(b.g.op(op)?))
        }
    };
    Ok(ModelGraph { graph: b.g, input, output, target, loss, batch })
}
