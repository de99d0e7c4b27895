use std::collections::BTreeMap;
use std::ops::Range;

use super::ops::{gelu, gelu_grad, layer_norm, layer_norm_backward, pack, unpack, weight_half_axis};
use super::ParamStore;
use crate::error::{Error, Result};
use crate::numerics::{irfftn, rfftn};
use crate::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation recorded at a node. Spectral values use a packed `[2, ...]` real/imag layout.
#[derive(Clone, Debug)]
pub enum Op {
    Input(String),
    Param(String),
    Constant(Tensor),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    /// Broadcast add of a vector over the last axis.
    AddBias(NodeId, NodeId),
    /// Broadcast multiply by a vector over the last axis.
    MulBias(NodeId, NodeId),
    Scale(NodeId, f64),
    Mul(NodeId, NodeId),
    /// Multiply by a one-element node.
    MulScalar(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Gelu(NodeId),
    Tanh(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    Rfftn { x: NodeId, axes: Vec<usize> },
    Irfftn { x: NodeId, axes: Vec<usize>, source_shape: Vec<usize> },
    Slice { x: NodeId, ranges: Vec<Range<usize>> },
    Scatter { x: NodeId, ranges: Vec<Range<usize>>, shape: Vec<usize> },
    Concat { inputs: Vec<NodeId>, axis: usize },
    Reshape(NodeId, Vec<usize>),
    LayerNorm { x: NodeId, eps: f64 },
    MseLoss { pred: NodeId, target: NodeId },
    /// Mean over axis-0 samples of `‖p − t‖/‖t‖`; the target is treated as a constant.
    L2reLoss { pred: NodeId, target: NodeId },
    ReduceSum(NodeId),
    ReduceMean(NodeId),
}

impl Op {
    fn kind(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::Constant(_) => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::AddBias(..) => "add_bias",
            Op::MulBias(..) => "mul_bias",
            Op::Scale(..) => "scale",
            Op::Mul(..) => "mul",
            Op::MulScalar(..) => "mul_scalar",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Gelu(_) => "gelu",
            Op::Tanh(_) => "tanh",
            Op::Sin(_) => "sin",
            Op::Cos(_) => "cos",
            Op::Rfftn { .. } => "rfftn",
            Op::Irfftn { .. } => "irfftn",
            Op::Slice { .. } => "slice",
            Op::Scatter { .. } => "scatter",
            Op::Concat { .. } => "concat",
            Op::Reshape(..) => "reshape",
            Op::LayerNorm { .. } => "layer_norm",
            Op::MseLoss { .. } => "mse_loss",
            Op::L2reLoss { .. } => "l2re_loss",
            Op::ReduceSum(_) => "reduce_sum",
            Op::ReduceMean(_) => "reduce_mean",
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Input(_) | Op::Param(_) | Op::Constant(_) => vec![],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::AddBias(a, b)
            | Op::MulBias(a, b)
            | Op::Mul(a, b)
            | Op::MulScalar(a, b)
            | Op::MatMul(a, b) => vec![*a, *b],
            Op::MseLoss { pred, target } | Op::L2reLoss { pred, target } => vec![*pred, *target],
            Op::Scale(x, _)
            | Op::Transpose(x)
            | Op::Gelu(x)
            | Op::Tanh(x)
            | Op::Sin(x)
            | Op::Cos(x)
            | Op::Reshape(x, _)
            | Op::ReduceSum(x)
            | Op::ReduceMean(x) => vec![*x],
            Op::Rfftn { x, .. }
            | Op::Irfftn { x, .. }
            | Op::Slice { x, .. }
            | Op::Scatter { x, .. }
            | Op::LayerNorm { x, .. } => vec![*x],
            Op::Concat { inputs, .. } => inputs.clone(),
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
}

/// Gradients keyed by parameter name.
pub type GradientSet = BTreeMap<String, Tensor>;

/// Append-only expression graph with cached forward values.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    values: Vec<Option<Tensor>>,
    aux: Vec<Option<Vec<f64>>>,
    params: BTreeMap<String, (NodeId, bool)>,
    inputs: BTreeMap<String, NodeId>,
}

fn same(a: &[usize], b: &[usize]) -> bool {
    a == b
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    fn label(&self, id: NodeId) -> String {
        let n = &self.nodes[id.0];
        match &n.op {
            Op::Input(s) | Op::Param(s) => format!("#{} {} `{s}`", id.0, n.op.kind()),
            op => format!("#{} {}", id.0, op.kind()),
        }
    }

    fn err_next(&self, kind: &str, msg: String) -> Error {
        Error::graph(format!("#{} {kind}", self.nodes.len()), msg)
    }

    fn check_ids(&self, op: &Op) -> Result<()> {
        for i in op.inputs() {
            if i.0 >= self.nodes.len() {
                return Err(self.err_next(op.kind(), format!("input node #{} does not exist", i.0)));
            }
        }
        Ok(())
    }

    fn push(&mut self, op: Op, shape: Vec<usize>) -> NodeId {
        self.nodes.push(Node { op, shape });
        self.values.push(None);
        self.aux.push(None);
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, name: &str, shape: &[usize]) -> Result<NodeId> {
        if let Some(&id) = self.inputs.get(name) {
            if self.shape(id) != shape {
                return Err(Error::graph(self.label(id), format!("redeclared with shape {shape:?}")));
            }
            return Ok(id);
        }
        let id = self.push(Op::Input(name.to_string()), shape.to_vec());
        self.inputs.insert(name.to_string(), id);
        Ok(id)
    }

    /// Trainable leaf; a name used twice refers to the same node.
    pub fn param(&mut self, name: &str, shape: &[usize]) -> Result<NodeId> {
        if let Some(&(id, _)) = self.params.get(name) {
            if self.shape(id) != shape {
                return Err(Error::graph(self.label(id), format!("redeclared with shape {shape:?}")));
            }
            return Ok(id);
        }
        let id = self.push(Op::Param(name.to_string()), shape.to_vec());
        self.params.insert(name.to_string(), (id, true));
        Ok(id)
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        let shape = t.shape().to_vec();
        self.push(Op::Constant(t), shape)
    }

    pub fn param_names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn input_names(&self) -> impl Iterator<Item = &String> {
        self.inputs.keys()
    }

    pub fn param_shape(&self, name: &str) -> Option<&[usize]> {
        self.params.get(name).map(|&(id, _)| self.shape(id))
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        match self.params.get_mut(name) {
            Some(e) => {
                e.1 = trainable;
                Ok(())
            }
            None => Err(Error::Usage(format!("no parameter named `{name}` in graph"))),
        }
    }

    /// Sets each parameter's trainable flag from a name predicate.
    pub fn set_trainable_by(&mut self, f: impl Fn(&str) -> bool) {
        for (k, e) in self.params.iter_mut() {
            e.1 = f(k);
        }
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.params.get(name).is_some_and(|e| e.1)
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.params.iter().filter(|(_, e)| e.1).map(|(k, _)| k.clone()).collect()
    }

    /// Records `op`, inferring its output shape.
    pub fn op(&mut self, op: Op) -> Result<NodeId> {
        self.check_ids(&op)?;
        let shape = self.infer(&op)?;
        Ok(self.push(op, shape))
    }

    fn infer(&self, op: &Op) -> Result<Vec<usize>> {
        let kind = op.kind();
        let bad = |msg: String| self.err_next(kind, msg);
        let s = |id: &NodeId| self.shape(*id).to_vec();
        Ok(match op {
            Op::Input(_) | Op::Param(_) | Op::Constant(_) => {
                return Err(bad("leaves are created with input/param/constant".into()))
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                if !same(&s(a), &s(b)) {
                    return Err(bad(format!("operand shapes {:?} and {:?} differ", s(a), s(b))));
                }
                s(a)
            }
            Op::AddBias(x, b) | Op::MulBias(x, b) => {
                let (xs, bs) = (s(x), s(b));
                if bs.len() != 1 || bs[0] != *xs.last().unwrap() {
                    return Err(bad(format!("vector {bs:?} does not broadcast over last axis of {xs:?}")));
                }
                xs
            }
            Op::Scale(x, _) | Op::Gelu(x) | Op::Tanh(x) | Op::Sin(x) | Op::Cos(x) => s(x),
            Op::MulScalar(x, c) => {
                if s(c) != [1] {
                    return Err(bad(format!("scalar operand has shape {:?}", s(c))));
                }
                s(x)
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (s(a), s(b));
                if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
                    return Err(bad(format!("cannot multiply {sa:?} by {sb:?}")));
                }
                vec![sa[0], sb[1]]
            }
            Op::Transpose(x) => {
                let sx = s(x);
                if sx.len() != 2 {
                    return Err(bad(format!("transpose of non-matrix {sx:?}")));
                }
                vec![sx[1], sx[0]]
            }
            Op::Rfftn { x, axes } => {
                let sx = s(x);
                for &a in axes {
                    if a >= sx.len() || !sx[a].is_power_of_two() {
                        return Err(bad(format!("axis {a} invalid for shape {sx:?}")));
                    }
                }
                let mut out = vec![2];
                out.extend_from_slice(&sx);
                let ha = *axes.last().ok_or_else(|| bad("no axes".into()))?;
                out[ha + 1] = sx[ha] / 2 + 1;
                out
            }
            Op::Irfftn { x, axes, source_shape } => {
                let sx = s(x);
                let ha = *axes.last().ok_or_else(|| bad("no axes".into()))?;
                let mut want = vec![2];
                want.extend_from_slice(source_shape);
                if ha + 1 < want.len() {
                    want[ha + 1] = source_shape[ha] / 2 + 1;
                }
                if sx != want {
                    return Err(bad(format!("packed spectrum {sx:?} inconsistent with source {source_shape:?}")));
                }
                source_shape.clone()
            }
            Op::Slice { x, ranges } => {
                let sx = s(x);
                if ranges.len() != sx.len() || ranges.iter().zip(&sx).any(|(r, &n)| r.start >= r.end || r.end > n) {
                    return Err(bad(format!("ranges {ranges:?} invalid for shape {sx:?}")));
                }
                ranges.iter().map(|r| r.len()).collect()
            }
            Op::Scatter { x, ranges, shape } => {
                let sx = s(x);
                let fits = ranges.len() == shape.len()
                    && ranges.iter().zip(shape).all(|(r, &n)| r.start < r.end && r.end <= n)
                    && ranges.iter().map(|r| r.len()).collect::<Vec<_>>() == sx;
                if !fits {
                    return Err(bad(format!("block {sx:?} does not fit {ranges:?} in {shape:?}")));
                }
                shape.clone()
            }
            Op::Concat { inputs, axis } => {
                let first = s(inputs.first().ok_or_else(|| bad("no inputs".into()))?);
                if *axis >= first.len() {
                    return Err(bad(format!("axis {axis} out of range")));
                }
                let mut out = first.clone();
                out[*axis] = 0;
                for i in inputs {
                    let si = s(i);
                    if si.len() != first.len() || si.iter().enumerate().any(|(k, &d)| k != *axis && d != first[k]) {
                        return Err(bad(format!("shape {si:?} incompatible with {first:?}")));
                    }
                    out[*axis] += si[*axis];
                }
                out
            }
            Op::Reshape(x, shape) => {
                let n: usize = s(x).iter().product();
                if shape.iter().product::<usize>() != n || shape.contains(&0) {
                    return Err(bad(format!("cannot reshape {:?} into {shape:?}", s(x))));
                }
                shape.clone()
            }
            Op::LayerNorm { x, .. } => s(x),
            Op::MseLoss { pred, target } | Op::L2reLoss { pred, target } => {
                if s(pred) != s(target) {
                    return Err(bad(format!("prediction {:?} vs target {:?}", s(pred), s(target))));
                }
                vec![1]
            }
            Op::ReduceSum(_) | Op::ReduceMean(_) => vec![1],
        })
    }

    pub fn value(&self, id: NodeId) -> Result<&Tensor> {
        self.values
            .get(id.0)
            .and_then(|v| v.as_ref())
            .ok_or_else(|| Error::graph(self.label(id), "value not computed; run forward first"))
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        Ok(self.value(id)?.data()[0])
    }

    /// Evaluates every node in order; leaves are looked up by name in `sources`, first match wins.
    pub fn forward(&mut self, sources: &[&ParamStore]) -> Result<()> {
        for i in 0..self.nodes.len() {
            let id = NodeId(i);
            let (v, aux) = self.eval(id, sources)?;
            if v.shape() != self.nodes[i].shape.as_slice() {
                return Err(Error::graph(
                    self.label(id),
                    format!("bound value has shape {:?}, expected {:?}", v.shape(), self.nodes[i].shape),
                ));
            }
            self.values[i] = Some(v);
            self.aux[i] = aux;
        }
        Ok(())
    }

    fn v(&self, id: NodeId) -> &Tensor {
        self.values[id.0].as_ref().expect("inputs precede outputs")
    }

    fn eval(&self, id: NodeId, sources: &[&ParamStore]) -> Result<(Tensor, Option<Vec<f64>>)> {
        let node = &self.nodes[id.0];
        let cfg = |e: Error| Error::graph(self.label(id), e.to_string());
        let out = match &node.op {
            Op::Input(name) | Op::Param(name) => sources
                .iter()
                .find_map(|s| s.get(name))
                .cloned()
                .ok_or_else(|| Error::graph(self.label(id), "unbound leaf"))?,
            Op::Constant(t) => t.clone(),
            Op::Add(a, b) => self.v(*a).add(self.v(*b)).map_err(cfg)?,
            Op::Sub(a, b) => self.v(*a).sub(self.v(*b)).map_err(cfg)?,
            Op::Mul(a, b) => self.v(*a).mul(self.v(*b)).map_err(cfg)?,
            Op::AddBias(x, b) => broadcast_last(self.v(*x), self.v(*b), |a, c| a + c),
            Op::MulBias(x, b) => broadcast_last(self.v(*x), self.v(*b), |a, c| a * c),
            Op::Scale(x, c) => self.v(*x).scale(*c),
            Op::MulScalar(x, c) => self.v(*x).scale(self.v(*c).data()[0]),
            Op::MatMul(a, b) => self.v(*a).matmul(self.v(*b)).map_err(cfg)?,
            Op::Transpose(x) => self.v(*x).transpose().map_err(cfg)?,
            Op::Gelu(x) => self.v(*x).map(gelu),
            Op::Tanh(x) => self.v(*x).map(f64::tanh),
            Op::Sin(x) => self.v(*x).map(f64::sin),
            Op::Cos(x) => self.v(*x).map(f64::cos),
            Op::Rfftn { x, axes } => pack(&rfftn(self.v(*x), axes).map_err(cfg)?),
            Op::Irfftn { x, axes, source_shape } => irfftn(&unpack(self.v(*x), source_shape, axes)).map_err(cfg)?,
            Op::Slice { x, ranges } => self.v(*x).slice(ranges).map_err(cfg)?,
            Op::Scatter { x, ranges, shape } => {
                let mut z = Tensor::zeros(shape);
                z.scatter_add(ranges, self.v(*x)).map_err(cfg)?;
                z
            }
            Op::Concat { inputs, axis } => {
                let parts: Vec<&Tensor> = inputs.iter().map(|i| self.v(*i)).collect();
                Tensor::concat(&parts, *axis).map_err(cfg)?
            }
            Op::Reshape(x, shape) => self.v(*x).clone().reshape(shape).map_err(cfg)?,
            Op::LayerNorm { x, eps } => {
                let (y, inv) = layer_norm(self.v(*x), *eps);
                return Ok((y, Some(inv)));
            }
            Op::MseLoss { pred, target } => {
                let (p, t) = (self.v(*pred), self.v(*target));
                let s: f64 = p.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum();
                Tensor::scalar(s / p.len() as f64)
            }
            Op::L2reLoss { pred, target } => {
                let (p, t) = (self.v(*pred), self.v(*target));
                let per = l2re_rows(p, t).map_err(|m| Error::graph(self.label(id), m))?;
                let mean = per.iter().map(|r| r.0).sum::<f64>() / per.len() as f64;
                Tensor::scalar(mean)
            }
            Op::ReduceSum(x) => Tensor::scalar(self.v(*x).sum()),
            Op::ReduceMean(x) => {
                let t = self.v(*x);
                Tensor::scalar(t.sum() / t.len() as f64)
            }
        };
        Ok((out, None))
    }

    fn requires_grad(&self) -> Vec<bool> {
        let mut rg = vec![false; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            rg[i] = match &n.op {
                Op::Param(name) => self.params.get(name).is_some_and(|e| e.1),
                Op::Input(_) | Op::Constant(_) => false,
                Op::L2reLoss { pred, .. } => rg[pred.0],
                op => op.inputs().iter().any(|j| rg[j.0]),
            };
        }
        rg
    }

    /// Reverse accumulation from a one-element `loss`; every trainable parameter gets an entry.
    pub fn backward(&self, loss: NodeId) -> Result<GradientSet> {
        if self.shape(loss) != [1] {
            return Err(Error::Usage(format!("loss {} is not scalar: shape {:?}", self.label(loss), self.shape(loss))));
        }
        self.value(loss)?;
        let rg = self.requires_grad();
        let mut adj: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            if !rg[i] {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            if let Op::Param(_) = &self.nodes[i].op {
                adj[i] = Some(g);
                continue;
            }
            self.propagate(NodeId(i), &g, &rg, &mut adj)?;
        }
        let mut out = GradientSet::new();
        for (name, &(id, train)) in &self.params {
            if train {
                let g = adj[id.0].take().unwrap_or_else(|| Tensor::zeros(self.shape(id)));
                out.insert(name.clone(), g);
            }
        }
        Ok(out)
    }

    fn propagate(&self, id: NodeId, g: &Tensor, rg: &[bool], adj: &mut [Option<Tensor>]) -> Result<()> {
        let mut acc = |j: NodeId, t: Tensor| {
            if !rg[j.0] {
                return;
            }
            match &mut adj[j.0] {
                Some(a) => a.add_assign(&t).expect("gradient shape"),
                slot @ None => *slot = Some(t),
            }
        };
        let node = &self.nodes[id.0];
        match &node.op {
            Op::Input(_) | Op::Param(_) | Op::Constant(_) => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if rg[a.0] {
                    acc(*a, g.mul(self.v(*b))?);
                }
                if rg[b.0] {
                    acc(*b, g.mul(self.v(*a))?);
                }
            }
            Op::AddBias(x, b) => {
                acc(*x, g.clone());
                if rg[b.0] {
                    acc(*b, sum_rows(g));
                }
            }
            Op::MulBias(x, b) => {
                if rg[x.0] {
                    acc(*x, broadcast_last(g, self.v(*b), |a, c| a * c));
                }
                if rg[b.0] {
                    acc(*b, sum_rows(&g.mul(self.v(*x))?));
                }
            }
            Op::Scale(x, c) => acc(*x, g.scale(*c)),
            Op::MulScalar(x, c) => {
                if rg[x.0] {
                    acc(*x, g.scale(self.v(*c).data()[0]));
                }
                if rg[c.0] {
                    acc(*c, Tensor::scalar(g.dot(self.v(*x))?));
                }
            }
            Op::MatMul(a, b) => {
                if rg[a.0] {
                    acc(*a, g.matmul(&self.v(*b).transpose()?)?);
                }
                if rg[b.0] {
                    acc(*b, self.v(*a).transpose()?.matmul(g)?);
                }
            }
            Op::Transpose(x) => acc(*x, g.transpose()?),
            Op::Gelu(x) => acc(*x, self.v(*x).map(gelu_grad).mul(g)?),
            Op::Tanh(x) => acc(*x, self.v(id).map(|y| 1.0 - y * y).mul(g)?),
            Op::Sin(x) => acc(*x, self.v(*x).map(f64::cos).mul(g)?),
            Op::Cos(x) => acc(*x, self.v(*x).map(|v| -v.sin()).mul(g)?),
            Op::Rfftn { x, axes } => {
                let src = self.shape(*x).to_vec();
                let ha = *axes.last().unwrap();
                let mut gw = g.clone();
                weight_half_axis(&mut gw, ha, src[ha], true);
                acc(*x, irfftn(&unpack(&gw, &src, axes))?);
            }
            Op::Irfftn { x, axes, source_shape } => {
                let ha = *axes.last().unwrap();
                let mut p = pack(&rfftn(g, axes)?);
                weight_half_axis(&mut p, ha, source_shape[ha], false);
                acc(*x, p);
            }
            Op::Slice { x, ranges } => {
                let mut z = Tensor::zeros(self.shape(*x));
                z.scatter_add(ranges, g)?;
                acc(*x, z);
            }
            Op::Scatter { x, ranges, .. } => acc(*x, g.slice(ranges)?),
            Op::Concat { inputs, axis } => {
                let mut start = 0;
                for i in inputs {
                    let si = self.shape(*i);
                    let mut r: Vec<Range<usize>> = node.shape.iter().map(|&n| 0..n).collect();
                    r[*axis] = start..start + si[*axis];
                    start += si[*axis];
                    if rg[i.0] {
                        acc(*i, g.slice(&r)?);
                    }
                }
            }
            Op::Reshape(x, _) => acc(*x, g.clone().reshape(self.shape(*x))?),
            Op::LayerNorm { x, .. } => {
                let inv = self.aux[id.0].as_ref().expect("layer norm statistics");
                acc(*x, layer_norm_backward(self.v(id), inv, g));
            }
            Op::MseLoss { pred, target } => {
                let (p, t) = (self.v(*pred), self.v(*target));
                let c = 2.0 * g.data()[0] / p.len() as f64;
                let d = p.sub(t)?.scale(c);
                if rg[target.0] {
                    acc(*target, d.scale(-1.0));
                }
                acc(*pred, d);
            }
            Op::L2reLoss { pred, target } => {
                let (p, t) = (self.v(*pred), self.v(*target));
                let per = l2re_rows(p, t).map_err(|m| Error::graph(self.label(id), m))?;
                let rows = per.len();
                let row_len = p.len() / rows;
                let c = g.data()[0] / rows as f64;
                let mut out = p.sub(t)?;
                for (r, &(_, dn, tn)) in per.iter().enumerate() {
                    let f = if dn > 0.0 { c / (dn * tn) } else { 0.0 };
                    for v in &mut out.data_mut()[r * row_len..(r + 1) * row_len] {
                        *v *= f;
                    }
                }
                acc(*pred, out);
            }
            Op::ReduceSum(x) => acc(*x, Tensor::filled(self.shape(*x), g.data()[0])),
            Op::ReduceMean(x) => {
                let s = self.shape(*x);
                let n: usize = s.iter().product();
                acc(*x, Tensor::filled(s, g.data()[0] / n as f64));
            }
        }
        Ok(())
    }

    // Composite helpers.

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.op(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.op(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.op(Op::Mul(a, b))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.op(Op::MatMul(a, b))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.op(Op::Scale(x, c))
    }

    pub fn gelu(&mut self, x: NodeId) -> Result<NodeId> {
        self.op(Op::Gelu(x))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        if self.shape(x) == shape {
            return Ok(x);
        }
        self.op(Op::Reshape(x, shape.to_vec()))
    }

    pub fn slice(&mut self, x: NodeId, ranges: Vec<Range<usize>>) -> Result<NodeId> {
        self.op(Op::Slice { x, ranges })
    }

    pub fn concat(&mut self, inputs: Vec<NodeId>, axis: usize) -> Result<NodeId> {
        if inputs.len() == 1 {
            return Ok(inputs[0]);
        }
        self.op(Op::Concat { inputs, axis })
    }

    /// `x · w + b` on a row matrix `x`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.op(Op::AddBias(y, b)),
            None => Ok(y),
        }
    }

    /// Complex product of packed rows `z: [2, P, C]` with `W = wr + i·wi`, as four real matmuls.
    pub fn complex_mix(&mut self, z: NodeId, wr: NodeId, wi: NodeId) -> Result<NodeId> {
        let s = self.shape(z).to_vec();
        if s.len() != 3 || s[0] != 2 {
            return Err(self.err_next("complex_mix", format!("expected packed [2, P, C], got {s:?}")));
        }
        let (p, c) = (s[1], s[2]);
        let zr = self.slice(z, vec![0..1, 0..p, 0..c])?;
        let zr = self.reshape(zr, &[p, c])?;
        let zi = self.slice(z, vec![1..2, 0..p, 0..c])?;
        let zi = self.reshape(zi, &[p, c])?;
        let rr = self.matmul(zr, wr)?;
        let ii = self.matmul(zi, wi)?;
        let ri = self.matmul(zr, wi)?;
        let ir = self.matmul(zi, wr)?;
        let ur = self.sub(rr, ii)?;
        let ui = self.add(ri, ir)?;
        let n = self.shape(wr)[1];
        let ur = self.reshape(ur, &[1, p, n])?;
        let ui = self.reshape(ui, &[1, p, n])?;
        self.concat(vec![ur, ui], 0)
    }
}

fn broadcast_last(x: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let n = b.len();
    let mut out = x.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v = f(*v, b.data()[i % n]);
    }
    out
}

fn sum_rows(g: &Tensor) -> Tensor {
    let n = g.cols();
    let mut out = vec![0.0; n];
    for (i, &v) in g.data().iter().enumerate() {
        out[i % n] += v;
    }
    Tensor::vector(out).expect("non-empty")
}

/// Per-row (relative error, ‖p−t‖, ‖t‖) over axis-0 samples.
fn l2re_rows(p: &Tensor, t: &Tensor) -> std::result::Result<Vec<(f64, f64, f64)>, String> {
    let rows = p.shape()[0];
    let n = p.len() / rows;
    (0..rows)
        .map(|r| {
            let (pr, tr) = (&p.data()[r * n..(r + 1) * n], &t.data()[r * n..(r + 1) * n]);
            let tn = tr.iter().map(|v| v * v).sum::<f64>().sqrt();
            if tn == 0.0 {
                return Err(format!("target sample {r} has zero norm"));
            }
            let dn = pr.iter().zip(tr).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            Ok((dn / tn, dn, tn))
        })
        .collect()
}
