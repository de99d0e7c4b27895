use serde::{Deserialize, Serialize};

use super::run_indexed;
use crate::backbone::BackboneConfig;
use crate::datagen::{build_dataset, TaskSpec};
use crate::diagnostics::{drop_high_curve, l2re, DropHighPoint};
use crate::error::{Error, Result};
use crate::training::{pretrain, PretrainConfig, TrainConfig};

fn d_backbone() -> BackboneConfig {
    BackboneConfig::new(vec![64], 32, 4, 2, 16)
}
fn d_task() -> TaskSpec {
    TaskSpec::heat(vec![64], 0.01, 2.0, 120, 0)
}
fn d_train() -> TrainConfig {
    let mut t = TrainConfig { steps: 1500, log_every: 100, ..TrainConfig::default() };
    t.optimizer.lr = 1e-2;
    t
}
fn d_bands() -> usize {
    8
}
fn d_seeds() -> Vec<u64> {
    (0..3).collect()
}
fn d_noise() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropHighConfig {
    #[serde(default = "d_backbone")]
    pub backbone: BackboneConfig,
    #[serde(default = "d_task")]
    pub task: TaskSpec,
    #[serde(default = "d_train")]
    pub train: TrainConfig,
    #[serde(default = "d_bands")]
    pub bands: usize,
    /// Each seed reseeds the model initialization, minibatch order and dataset.
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    /// Relative tolerance for the monotonicity and flatness checks.
    #[serde(default = "d_noise")]
    pub noise: f64,
}

impl Default for DropHighConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropHighSeed {
    pub seed: u64,
    pub baseline_l2re: f64,
    pub curve: Vec<DropHighPoint>,
    pub identity_exact: bool,
    pub non_increasing: bool,
    pub flat_top: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropHighReport {
    pub bands: usize,
    pub seeds: Vec<DropHighSeed>,
}

impl DropHighReport {
    pub fn passed(&self) -> bool {
        !self.seeds.is_empty() && self.seeds.iter().all(|s| s.identity_exact && s.non_increasing && s.flat_top)
    }
}

/// Trains a heat model per seed, then measures test L2RE with input bands `≥ k` removed.
/// The curve must not rise by more than `noise` (relative) from one cutoff to the next,
/// and every cutoff in the top quarter must lie within `noise` of the unfiltered error.
pub fn drop_high_experiment(cfg: &DropHighConfig, threads: usize) -> Result<DropHighReport> {
    let seeds = run_indexed(cfg.seeds.len(), threads, |i| {
        let seed = cfg.seeds[i];
        let ds = build_dataset(&TaskSpec { seed: cfg.task.seed ^ seed, ..cfg.task.clone() })?;
        let train = TrainConfig { seed, ..cfg.train.clone() };
        let out = pretrain(&PretrainConfig { backbone: cfg.backbone.clone(), train }, &ds)?;
        if let Some(step) = out.diverged_at {
            return Err(Error::numeric(format!("drop-high seed {seed} diverged at step {step}")));
        }
        let model = out.last.model();
        let (x, y) = ds.test()?;
        let baseline_l2re = l2re(&model.predict(&x, cfg.train.batch)?, &y)?;
        let curve = drop_high_curve(&model, &x, &y, cfg.bands, cfg.train.batch)?;
        let last = curve.last().unwrap().l2re;
        let top = cfg.bands - cfg.bands / 4;
        Ok(DropHighSeed {
            seed,
            baseline_l2re,
            identity_exact: last.to_bits() == baseline_l2re.to_bits(),
            non_increasing: curve.windows(2).all(|w| w[1].l2re <= w[0].l2re * (1.0 + cfg.noise)),
            flat_top: curve[top..].iter().all(|p| (p.l2re - last).abs() <= cfg.noise * last),
            curve,
        })
    })?;
    Ok(DropHighReport { bands: cfg.bands, seeds })
}
