use serde::{Deserialize, Serialize};

use super::{adamw_step, Checkpoint, FreezeMask, OptimState, OptimizerRecord, TraceRow, TrainConfig};
use crate::autodiff::ParamStore;
use crate::backbone::{BackboneConfig, Model};
use crate::datagen::Dataset;
use crate::diagnostics::l2re;
use crate::error::{Error, Result};
use crate::numerics::Prng;
use crate::peft::{attach, PeftConfig, PeftKind};
use crate::Tensor;

/// Whatever a training run produced, including a run that stopped on a non-finite loss.
#[derive(Clone, Debug)]
pub struct FitOutcome {
    /// Parameters after the last finite step.
    pub model: Model,
    pub best: Model,
    pub optim: OptimState,
    pub trace: Vec<TraceRow>,
    /// Step at which the loss or a gradient became non-finite.
    pub diverged_at: Option<usize>,
}

fn gather(t: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let row = t.len() / t.shape()[0];
    let mut data = Vec::with_capacity(idx.len() * row);
    for &i in idx {
        data.extend_from_slice(&t.data()[i * row..(i + 1) * row]);
    }
    let mut shape = t.shape().to_vec();
    shape[0] = idx.len();
    Tensor::new(shape, data)
}

/// Mean-squared error of `model` over a whole split.
pub fn dataset_mse(model: &Model, x: &Tensor, y: &Tensor, batch: usize) -> Result<f64> {
    let p = model.predict(x, batch)?;
    Ok(p.sub(y)?.data().iter().map(|v| v * v).sum::<f64>() / y.len() as f64)
}

fn split_back(model: &mut Model, trainable: &ParamStore) {
    for (name, t) in trainable.iter() {
        if let Some(p) = model.peft.as_mut().and_then(|(_, s)| s.get_mut(name)) {
            *p = t.clone();
        } else if let Some(p) = model.params.get_mut(name) {
            *p = t.clone();
        }
    }
}

/// Minibatch AdamW on the parameters `mask` marks trainable. Frozen tensors are never written.
pub fn fit(
    model: &Model,
    mask: &FreezeMask,
    train: (&Tensor, &Tensor),
    test: Option<(&Tensor, &Tensor)>,
    cfg: &TrainConfig,
    mut optim: OptimState,
) -> Result<FitOutcome> {
    cfg.validate()?;
    let mut all: Vec<&String> = model.params.names().collect();
    if let Some((_, s)) = &model.peft {
        all.extend(s.names());
    }
    mask.check_covers(all)?;
    let (x, y) = train;
    let n = x.shape()[0];
    if n == 0 || y.shape()[0] != n {
        return Err(Error::config("training split is empty or inputs and targets disagree"));
    }
    let batch = cfg.batch.min(n);
    let mut model = model.clone();
    let mut trainable: ParamStore = model
        .params
        .iter()
        .chain(model.peft.iter().flat_map(|(_, s)| s.iter()))
        .filter(|(k, _)| mask.is_trainable(k))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let mut mg = model.graph(batch, Some(cfg.loss))?;
    mg.graph.set_trainable_by(|name| mask.is_trainable(name));
    let loss_id = mg.loss.expect("graph built with a loss");
    let mut rng = Prng::derive(cfg.seed, 0x7261_696e);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let evaluate = |m: &Model| -> Result<f64> {
        match test {
            Some((tx, ty)) => l2re(&m.predict(tx, cfg.batch)?, ty),
            None => Ok(f64::NAN),
        }
    };
    let mut trace = Vec::new();
    let mut best = model.clone();
    let mut best_score = f64::INFINITY;
    let mut window = (0.0, 0usize);
    let mut last_good = trainable.clone();
    let mut diverged_at = None;
    for step in 0..cfg.steps {
        let mut idx = Vec::with_capacity(batch);
        while idx.len() < batch {
            if cursor == order.len() {
                order = rng.permutation(n);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let mut feed = ParamStore::new();
        feed.insert("input", gather(x, &idx)?);
        feed.insert("target", gather(y, &idx)?);
        let mut sources = vec![&feed, &trainable];
        sources.extend(model.sources());
        mg.graph.forward(&sources)?;
        let loss = mg.graph.scalar(loss_id)?;
        if !loss.is_finite() {
            diverged_at = Some(step);
            trainable = last_good.clone();
            break;
        }
        if step == 0 {
            trace.push(TraceRow { step: 0, train_loss: loss, test_l2re: evaluate(&model)? });
        }
        let grads = mg.graph.backward(loss_id)?;
        last_good = trainable.clone();
        let lr = cfg.schedule.at(cfg.optimizer.lr, step, cfg.steps);
        match adamw_step(&mut trainable, &grads, &mut optim, &cfg.optimizer, lr) {
            Err(Error::Numeric { .. }) => {
                diverged_at = Some(step);
                break;
            }
            r => r?,
        }
        window.0 += loss;
        window.1 += 1;
        let done = step + 1;
        if done % cfg.log_every == 0 || done == cfg.steps {
            split_back(&mut model, &trainable);
            let test_l2re = evaluate(&model)?;
            trace.push(TraceRow { step: done, train_loss: window.0 / window.1 as f64, test_l2re });
            window = (0.0, 0);
            let score = if test_l2re.is_nan() { trace.last().unwrap().train_loss } else { test_l2re };
            if score < best_score {
                best_score = score;
                best = model.clone();
            }
        }
    }
    split_back(&mut model, &trainable);
    if best_score == f64::INFINITY {
        best = model.clone();
    }
    Ok(FitOutcome { model, best, optim, trace, diverged_at })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub backbone: BackboneConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub last: Checkpoint,
    pub best: Checkpoint,
    pub trace: Vec<TraceRow>,
    pub diverged_at: Option<usize>,
}

fn checkpoint(model: &Model, optim: &OptimState, cfg: &TrainConfig, meta: &[(&str, serde_json::Value)]) -> Checkpoint {
    let mut c = Checkpoint::from_model(model);
    c.optimizer = Some((OptimizerRecord { hyper: cfg.optimizer, step: optim.step }, optim.clone()));
    for (k, v) in meta {
        c.meta.insert(k.to_string(), v.clone());
    }
    c
}

type Pair = (Tensor, Tensor);

fn splits(ds: &Dataset) -> Result<(Pair, Option<Pair>)> {
    if ds.is_empty() {
        return Err(Error::config("dataset has no samples"));
    }
    let test = if ds.header.test > 0 { Some(ds.test()?) } else { None };
    Ok((ds.train()?, test))
}

/// Trains every backbone parameter from a fresh initialization seeded by `cfg.train.seed`.
pub fn pretrain(cfg: &PretrainConfig, ds: &Dataset) -> Result<TrainOutcome> {
    let model = Model::new(cfg.backbone.clone(), cfg.train.seed)?;
    let ((x, y), test) = splits(ds)?;
    let mask = FreezeMask::from_fn(model.params.names(), |_| true);
    let out = fit(&model, &mask, (&x, &y), test.as_ref().map(|(a, b)| (a, b)), &cfg.train, OptimState::new())?;
    let meta = [("stage", serde_json::json!("pretrain")), ("train", serde_json::to_value(&cfg.train)?)];
    Ok(TrainOutcome {
        last: checkpoint(&out.model, &out.optim, &cfg.train, &meta),
        best: checkpoint(&out.best, &out.optim, &cfg.train, &meta),
        trace: out.trace,
        diverged_at: out.diverged_at,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub kind: PeftKind,
    pub trainable: usize,
    pub total: usize,
    /// Closed-form count for frequency-adaptive adapters.
    pub formula: Option<u64>,
    pub init_test_l2re: f64,
    pub test_l2re: f64,
    /// Maximum absolute change of any frozen tensor; zero when freezing held.
    pub frozen_drift: f64,
}

#[derive(Clone, Debug)]
pub struct FinetuneOutcome {
    pub checkpoint: Checkpoint,
    pub trace: Vec<TraceRow>,
    pub report: FinetuneReport,
    pub diverged_at: Option<usize>,
}

/// Attaches `peft` to the backbone in `base` and trains only the attachment; kind `full` trains the whole backbone.
pub fn finetune(base: &Checkpoint, peft: &PeftConfig, train: &TrainConfig, ds: &Dataset) -> Result<FinetuneOutcome> {
    let mut model = base.model();
    model.peft = None;
    if peft.kind != PeftKind::Full {
        model.peft = Some(attach(&model.config, peft)?);
    }
    let full = peft.kind == PeftKind::Full;
    let mut names: Vec<String> = model.params.names().cloned().collect();
    if let Some((_, s)) = &model.peft {
        names.extend(s.names().cloned());
    }
    let backbone = model.params.clone();
    let mask = FreezeMask::from_fn(&names, |n| full || !backbone.contains(n));
    let ((x, y), test) = splits(ds)?;
    let test_ref = test.as_ref().map(|(a, b)| (a, b));
    let init_test_l2re = match test_ref {
        Some((tx, ty)) => l2re(&model.predict(tx, train.batch)?, ty)?,
        None => f64::NAN,
    };
    let out = fit(&model, &mask, (&x, &y), test_ref, train, OptimState::new())?;
    let mut frozen_drift: f64 = 0.0;
    for (name, before) in backbone.iter() {
        if !mask.is_trainable(name) {
            frozen_drift = frozen_drift.max(out.model.params.require(name)?.sub(before)?.max_abs());
        }
    }
    let size = |m: &Model, f: &dyn Fn(&str) -> bool| -> usize {
        let peft_n = m.peft.iter().flat_map(|(_, s)| s.iter()).filter(|(k, _)| f(k)).map(|(_, v)| v.len()).sum::<usize>();
        m.params.iter().filter(|(k, _)| f(k)).map(|(_, v)| v.len()).sum::<usize>() + peft_n
    };
    let test_l2re = match test_ref {
        Some((tx, ty)) => l2re(&out.model.predict(tx, train.batch)?, ty)?,
        None => f64::NAN,
    };
    let report = FinetuneReport {
        kind: peft.kind,
        trainable: size(&out.model, &|k| mask.is_trainable(k)),
        total: size(&out.model, &|_| true),
        formula: out.model.peft.as_ref().and_then(|(m, _)| m.eq13_count(&out.model.config)),
        init_test_l2re,
        test_l2re,
        frozen_drift,
    };
    let meta = [
        ("stage", serde_json::json!("finetune")),
        ("peft", serde_json::to_value(peft)?),
        ("train", serde_json::to_value(train)?),
    ];
    Ok(FinetuneOutcome {
        checkpoint: checkpoint(&out.model, &out.optim, train, &meta),
        trace: out.trace,
        report,
        diverged_at: out.diverged_at,
    })
}
