use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::run_indexed;
use crate::backbone::BackboneConfig;
use crate::datagen::{build_dataset, Dataset, TaskSpec};
use crate::error::{Error, Result};
use crate::peft::{attach, matched_lora_rank, PeftConfig, PeftKind};
use crate::training::{finetune, pretrain, Checkpoint, PretrainConfig, TrainConfig, TraceRow};

fn d_backbone() -> BackboneConfig {
    BackboneConfig::new(vec![128], 32, 4, 2, 16)
}
fn d_pre_task() -> TaskSpec {
    TaskSpec::heat(vec![128], 0.01, 2.0, 200, 0)
}
fn d_ft_task() -> TaskSpec {
    TaskSpec::burgers(vec![128], 0.05, 1.5, 200, 1)
}
fn d_pre_train() -> TrainConfig {
    let mut t = TrainConfig { steps: 2000, log_every: 100, ..TrainConfig::default() };
    t.optimizer.lr = 1e-2;
    t
}
fn d_ft_train() -> TrainConfig {
    TrainConfig { steps: 500, log_every: 50, ..TrainConfig::default() }
}
fn d_peft() -> PeftConfig {
    PeftConfig::new(PeftKind::FAdapter)
}
fn d_kinds() -> Vec<PeftKind> {
    vec![PeftKind::Lora, PeftKind::Adapter, PeftKind::FAdapter, PeftKind::FInverseAdapter]
}
fn d_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn d_tol() -> f64 {
    0.1
}

/// Pretrain on one PDE distribution, fine-tune every kind on another at matched trainable budgets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    #[serde(default = "d_backbone")]
    pub backbone: BackboneConfig,
    #[serde(default = "d_pre_task")]
    pub pretrain_task: TaskSpec,
    #[serde(default = "d_ft_task")]
    pub finetune_task: TaskSpec,
    #[serde(default = "d_pre_train")]
    pub pretrain: TrainConfig,
    #[serde(default = "d_ft_train")]
    pub finetune: TrainConfig,
    /// Band schedule and variant settings shared by every kind; `kind` and `seed` are overridden per run.
    #[serde(default = "d_peft")]
    pub peft: PeftConfig,
    #[serde(default = "d_kinds")]
    pub kinds: Vec<PeftKind>,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    /// Largest allowed relative deviation of a kind's trainable count from the F-Adapter count.
    #[serde(default = "d_tol")]
    pub budget_tolerance: f64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub kind: PeftKind,
    pub trainable: usize,
    pub lora_rank: Option<usize>,
    pub relative_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub kind: PeftKind,
    pub seed: u64,
    pub trainable: usize,
    pub init_test_l2re: f64,
    pub test_l2re: f64,
    pub trace: Vec<TraceRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendChecks {
    pub adapter_below_lora: bool,
    pub fadapter_le_adapter: bool,
    pub adapter_le_finverse: bool,
    /// Seeds where the F-Inverse-Adapter L2RE exceeds the F-Adapter L2RE.
    pub finverse_gap_seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub pretrain_test_l2re: f64,
    pub budgets: Vec<BudgetRow>,
    pub runs: Vec<RunRecord>,
    pub mean_test_l2re: BTreeMap<PeftKind, f64>,
    pub checks: Option<TrendChecks>,
}

/// The common pretrained backbone and the fine-tuning dataset.
pub fn pretrain_backbone(cfg: &TransferConfig) -> Result<(Checkpoint, f64, Dataset)> {
    let pre_ds = build_dataset(&cfg.pretrain_task)?;
    let pc = PretrainConfig { backbone: cfg.backbone.clone(), train: cfg.pretrain.clone() };
    let out = pretrain(&pc, &pre_ds)?;
    if let Some(step) = out.diverged_at {
        return Err(Error::numeric(format!("pretraining diverged at step {step}")));
    }
    let score = out.trace.last().map(|r| r.test_l2re).unwrap_or(f64::NAN);
    Ok((out.last, score, build_dataset(&cfg.finetune_task)?))
}

fn budgeted(cfg: &TransferConfig) -> Result<Vec<(PeftConfig, BudgetRow)>> {
    let bb = &cfg.backbone;
    let reference = attach(bb, &PeftConfig { kind: PeftKind::FAdapter, ..cfg.peft.clone() })?.1.numel();
    let mut out = Vec::new();
    for &kind in &cfg.kinds {
        let mut pc = PeftConfig { kind, ..cfg.peft.clone() };
        let mut rank = None;
        if matches!(kind, PeftKind::Lora | PeftKind::BlockwiseLora) {
            pc.lora_rank = matched_lora_rank(bb, kind == PeftKind::BlockwiseLora, reference);
            rank = Some(pc.lora_rank);
        }
        let trainable = if kind == PeftKind::Full {
            bb.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
        } else {
            attach(bb, &pc)?.1.numel()
        };
        let relative_gap = (trainable as f64 - reference as f64).abs() / reference as f64;
        if kind != PeftKind::Full && relative_gap >= cfg.budget_tolerance {
            return Err(Error::config(format!(
                "{kind} has {trainable} trainable parameters, {:.1}% away from the F-Adapter budget {reference}",
                100.0 * relative_gap
            )));
        }
        out.push((pc, BudgetRow { kind, trainable, lora_rank: rank, relative_gap }));
    }
    Ok(out)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs the matched-budget comparison. Runs are independent and may use up to `threads` workers.
pub fn compare(cfg: &TransferConfig, threads: usize) -> Result<CompareReport> {
    let plan = budgeted(cfg)?;
    let (base, pretrain_test_l2re, ds) = pretrain_backbone(cfg)?;
    let jobs: Vec<(usize, u64)> = (0..plan.len()).flat_map(|k| cfg.seeds.iter().map(move |&s| (k, s))).collect();
    let runs = run_indexed(jobs.len(), threads, |j| {
        let (k, seed) = jobs[j];
        let pc = PeftConfig { seed, ..plan[k].0.clone() };
        let tc = TrainConfig { seed, ..cfg.finetune.clone() };
        let out = finetune(&base, &pc, &tc, &ds)?;
        if let Some(step) = out.diverged_at {
            return Err(Error::numeric(format!("{} seed {seed} diverged at step {step}", pc.kind)));
        }
        Ok(RunRecord {
            kind: pc.kind,
            seed,
            trainable: out.report.trainable,
            init_test_l2re: out.report.init_test_l2re,
            test_l2re: out.report.test_l2re,
            trace: out.trace,
        })
    })?;
    let mut mean_test_l2re = BTreeMap::new();
    for (_, b) in &plan {
        mean_test_l2re.insert(b.kind, mean(runs.iter().filter(|r| r.kind == b.kind).map(|r| r.test_l2re)));
    }
    let get = |k: PeftKind| mean_test_l2re.get(&k).copied();
    let checks = match (get(PeftKind::Lora), get(PeftKind::Adapter), get(PeftKind::FAdapter), get(PeftKind::FInverseAdapter)) {
        (Some(lora), Some(ad), Some(fa), Some(fi)) => {
            let per_seed = |k: PeftKind, s: u64| runs.iter().find(|r| r.kind == k && r.seed == s).map(|r| r.test_l2re);
            let gaps = cfg
                .seeds
                .iter()
                .filter(|&&s| per_seed(PeftKind::FInverseAdapter, s) > per_seed(PeftKind::FAdapter, s))
                .count();
            Some(TrendChecks {
                adapter_below_lora: ad < lora,
                fadapter_le_adapter: fa <= ad,
                adapter_le_finverse: ad <= fi,
                finverse_gap_seeds: gaps,
            })
        }
        _ => None,
    };
    Ok(CompareReport { pretrain_test_l2re, budgets: plan.into_iter().map(|p| p.1).collect(), runs, mean_test_l2re, checks })
}
