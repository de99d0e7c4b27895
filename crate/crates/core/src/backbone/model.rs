use super::{build_model_graph, BackboneConfig, ModelGraph};
use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::numerics::Prng;
use crate::peft::PeftManifest;
use crate::Tensor;

/// Fresh backbone tensors: pointwise weights `U(±1/√fan_in)`, zero biases, kernels `N(0, 1/(d²·h_t))`.
pub fn init_params(cfg: &BackboneConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = Prng::new(seed);
    let d = cfg.block_width() as f64;
    let kernel_std = 1.0 / (d * d * cfg.temporal_modes as f64);
    let mut store = ParamStore::new();
    for (name, shape) in cfg.param_shapes() {
        let t = if name.ends_with("bias") || name.ends_with(".b1") || name.ends_with(".b2") {
            Tensor::zeros(&shape)
        } else if name.contains(".w1.") || name.contains(".w2.") {
            Tensor::from_fn(&shape, |_| kernel_std * rng.normal())
        } else {
            let bound = 1.0 / (shape[0] as f64).sqrt();
            Tensor::from_fn(&shape, |_| rng.uniform_in(-bound, bound))
        };
        store.insert(name, t);
    }
    Ok(store)
}

/// Backbone tensors with an optional PEFT attachment.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: BackboneConfig,
    pub params: ParamStore,
    pub peft: Option<(PeftManifest, ParamStore)>,
}

impl Model {
    pub fn new(config: BackboneConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(Self { config, params, peft: None })
    }

    pub fn graph(&self, batch: usize, loss: Option<super::LossKind>) -> Result<ModelGraph> {
        build_model_graph(&self.config, self.peft.as_ref().map(|p| &p.0), batch, loss)
    }

    pub fn sources(&self) -> Vec<&ParamStore> {
        match &self.peft {
            Some((_, s)) => vec![s, &self.params],
            None => vec![&self.params],
        }
    }

    /// Forward pass over `inputs: [N, grid..., c_in]`, evaluated `batch` samples at a time.
    pub fn predict(&self, inputs: &Tensor, batch: usize) -> Result<Tensor> {
        let cfg = &self.config;
        let mut want = vec![inputs.shape()[0]];
        want.extend_from_slice(&cfg.grid);
        want.push(cfg.in_channels);
        if inputs.shape() != want.as_slice() {
            return Err(Error::config(format!("inputs have shape {:?}, expected {want:?}", inputs.shape())));
        }
        let n = want[0];
        let batch = batch.clamp(1, n);
        let row_in = inputs.len() / n;
        let row_out = cfg.points() * cfg.out_channels;
        let mut out = Vec::with_capacity(n * row_out);
        let mut cached: Option<ModelGraph> = None;
        let mut start = 0;
        while start < n {
            let b = batch.min(n - start);
            if cached.as_ref().map(|m| m.batch) != Some(b) {
                cached = Some(self.graph(b, None)?);
            }
            let mg = cached.as_mut().unwrap();
            let mut shape = want.clone();
            shape[0] = b;
            let chunk = Tensor::new(shape, inputs.data()[start * row_in..(start + b) * row_in].to_vec())?;
            let mut feed = ParamStore::new();
            feed.insert("input", chunk);
            let mut sources = vec![&feed];
            sources.extend(self.sources());
            mg.graph.forward(&sources)?;
            out.extend_from_slice(mg.graph.value(mg.output)?.data());
            start += b;
        }
        let mut shape = want;
        *shape.last_mut().unwrap() = cfg.out_channels;
        Tensor::new(shape, out)
    }
}
