use splab::backbone::BackboneConfig;
use splab::datagen::{build_dataset, TaskSpec};
use splab::diagnostics::energy_spectrum;
use splab::experiments::*;
use splab::peft::{PeftConfig, PeftKind};
use splab::theory::ProbeConfig;
use splab::training::{finetune, TrainConfig};
use splab::Error;

fn tiny_transfer() -> TransferConfig {
    let mut cfg = TransferConfig {
        backbone: BackboneConfig::new(vec![32], 16, 2, 1, 8),
        pretrain_task: TaskSpec::heat(vec![32], 0.01, 2.0, 20, 0),
        finetune_task: TaskSpec::burgers(vec![32], 0.05, 1.5, 20, 1),
        seeds: vec![0, 1],
        ..TransferConfig::default()
    };
    cfg.pretrain.steps = 40;
    cfg.pretrain.log_every = 10;
    cfg.finetune.steps = 15;
    cfg.finetune.log_every = 5;
    cfg
}

#[test]
fn run_indexed_is_order_stable_and_propagates_errors() {
    let f = |i: usize| Ok((i * i) as u64);
    let serial = run_indexed(17, 0, f).unwrap();
    assert_eq!(serial, run_indexed(17, 4, f).unwrap());
    assert_eq!(serial[16], 256);
    let err = run_indexed(8, 3, |i| if i == 5 { Err(Error::config("five")) } else { Ok(i) }).unwrap_err();
    assert!(err.to_string().contains("five"));
}

#[test]
fn compare_matches_budgets_and_is_thread_independent() {
    let cfg = tiny_transfer();
    let a = compare(&cfg, 1).unwrap();
    assert_eq!(a.runs.len(), cfg.kinds.len() * cfg.seeds.len());
    assert!(a.budgets.iter().all(|b| b.relative_gap < 0.1));
    let lora = a.budgets.iter().find(|b| b.kind == PeftKind::Lora).unwrap();
    assert!(lora.lora_rank.is_some());
    for r in &a.runs {
        let b = a.budgets.iter().find(|b| b.kind == r.kind).unwrap();
        assert_eq!(r.trainable, b.trainable);
        assert!(r.test_l2re.is_finite() && r.init_test_l2re.is_finite());
    }
    assert!(a.checks.is_some());
    let b = compare(&cfg, 3).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn compare_rejects_unmatched_budgets() {
    let cfg = TransferConfig { budget_tolerance: 1e-9, ..tiny_transfer() };
    let err = compare(&cfg, 0).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert!(err.to_string().contains("F-Adapter budget"));
}

#[test]
fn fadapter_improves_on_the_transfer_task() {
    let mut cfg = TransferConfig::default();
    cfg.pretrain.steps = 500;
    let (base, pre_l2re, ds) = pretrain_backbone(&cfg).unwrap();
    assert!(pre_l2re < 0.119, "{pre_l2re}");
    let tc = TrainConfig { steps: 300, ..cfg.finetune.clone() };
    let out = finetune(&base, &PeftConfig { seed: 0, ..PeftConfig::new(PeftKind::FAdapter) }, &tc, &ds).unwrap();
    assert!(out.report.test_l2re < out.report.init_test_l2re, "{:?}", out.report);
    assert!(out.report.formula.unwrap() <= out.report.trainable as u64);
}

#[test]
fn drop_high_experiment_small() {
    let mut cfg = DropHighConfig {
        backbone: BackboneConfig::new(vec![32], 8, 2, 1, 8),
        task: TaskSpec::heat(vec![32], 0.01, 2.0, 20, 0),
        bands: 4,
        seeds: vec![0, 1],
        ..DropHighConfig::default()
    };
    cfg.train.steps = 20;
    let rep = drop_high_experiment(&cfg, 0).unwrap();
    assert_eq!(rep.seeds.len(), 2);
    for s in &rep.seeds {
        assert_eq!(s.curve.len(), 5);
        assert!(s.identity_exact);
        assert!(s.curve[0].l2re > 0.5);
    }
    assert_eq!(rep, drop_high_experiment(&cfg, 2).unwrap());
}

#[test]
fn spectrum_metrics_bookkeeping() {
    let ds = build_dataset(&TaskSpec::heat(vec![32], 0.01, 2.0, 20, 3)).unwrap();
    let model = splab::backbone::Model::new(BackboneConfig::new(vec![32], 8, 2, 1, 8), 0).unwrap();
    let (x, y) = ds.test().unwrap();
    let m = spectrum_metrics(&model, &x, &y, 4).unwrap();
    assert_eq!(m.prediction.energy.len(), m.reference.energy.len());
    let n = y.shape()[0];
    let mut total = 0.0;
    for i in 0..n {
        let s = y.slice(&[i..i + 1, 0..32, 0..1]).unwrap().reshape(&[32]).unwrap();
        total += energy_spectrum(&[&s], None).unwrap().total();
    }
    assert!((m.reference.total() - total / n as f64).abs() <= 1e-12 * total);
    assert!(m.rmsle.is_finite() && m.relerr_percent.is_finite());
    assert!(spectrum_metrics(&model, &x, &splab::Tensor::zeros(&[2, 5]), 4).is_err());
}

#[test]
fn adapter_trunc_experiment_small() {
    let cfg = AdapterTruncConfig {
        rows: 400,
        dim: 8,
        capacities: vec![1, 2, 4, 8],
        seeds: vec![0, 1],
        probe: ProbeConfig { steps: 30, batch: 64, ..ProbeConfig::default() },
        ..AdapterTruncConfig::default()
    };
    let rep = adapter_trunc_experiment(&cfg, 0).unwrap();
    assert_eq!(rep.seeds.len(), 2);
    assert!(rep.truncation_monotone());
    for s in &rep.seeds {
        assert_eq!(s.table.rows.len(), 4);
        assert_eq!(s.table.rows[3].truncation_rmse, 0.0);
    }
    assert_eq!(rep, adapter_trunc_experiment(&cfg, 2).unwrap());
}
