use proptest::prelude::*;
use splab::autodiff::{GradientSet, ParamStore};
use splab::backbone::{BackboneConfig, LossKind, Model};
use splab::datagen::{build_dataset, Dataset, TaskSpec};
use splab::diagnostics::l2re;
use splab::peft::{count_params_eq13, PeftConfig, PeftKind};
use splab::training::*;
use splab::{Prng, Tensor};

fn one(v: f64) -> ParamStore {
    let mut s = ParamStore::new();
    s.insert("p", Tensor::vector(vec![v]).unwrap());
    s
}

fn grad(v: f64) -> GradientSet {
    let mut g = GradientSet::new();
    g.insert("p".into(), Tensor::vector(vec![v]).unwrap());
    g
}

fn value(s: &ParamStore) -> f64 {
    s.get("p").unwrap().data()[0]
}

#[test]
fn adamw_single_step_by_hand() {
    let mut p = one(1.0);
    let mut st = OptimState::new();
    let cfg = AdamWConfig::default();
    adamw_step(&mut p, &grad(1.0), &mut st, &cfg, 1e-3).unwrap();
    assert!((value(&p) - (1.0 - 1e-3 / (1.0 + 1e-8))).abs() < 1e-16);
    assert!((value(&p) - 0.999).abs() < 1e-10);
    assert_eq!(st.step, 1);
    assert!((st.m.get("p").unwrap().data()[0] - 0.1).abs() < 1e-16);
    assert!((st.v.get("p").unwrap().data()[0] - 0.001).abs() < 1e-16);
}

#[test]
fn adamw_zero_gradient_and_pure_decay() {
    let mut p = one(0.7);
    let mut st = OptimState::new();
    let cfg = AdamWConfig::default();
    for _ in 0..5 {
        adamw_step(&mut p, &grad(0.0), &mut st, &cfg, 1e-3).unwrap();
    }
    assert_eq!(value(&p), 0.7);
    let cfg = AdamWConfig { weight_decay: 0.1, ..AdamWConfig::default() };
    let mut p = one(0.7);
    adamw_step(&mut p, &grad(0.0), &mut OptimState::new(), &cfg, 1e-2).unwrap();
    assert!((value(&p) - 0.7 * (1.0 - 1e-2 * 0.1)).abs() < 1e-16);
}

#[test]
fn adamw_rejects_bad_gradients_before_moving() {
    let mut p = one(2.0);
    p.insert("q", Tensor::vector(vec![1.0, 1.0]).unwrap());
    let mut g = grad(1.0);
    g.insert("q".into(), Tensor::vector(vec![1.0, f64::NAN]).unwrap());
    let mut st = OptimState::new();
    let err = adamw_step(&mut p, &g, &mut st, &AdamWConfig::default(), 1e-3).unwrap_err();
    assert!(err.to_string().contains("`q`"), "{err}");
    assert_eq!(err.exit_code(), 3);
    assert_eq!(value(&p), 2.0);
    assert_eq!(st.step, 0);
    let mut g = grad(1.0);
    g.insert("q".into(), Tensor::vector(vec![1.0]).unwrap());
    assert!(adamw_step(&mut p, &g, &mut st, &AdamWConfig::default(), 1e-3).is_err());
}

proptest! {
    #[test]
    fn adamw_moments_mirror_parameters(seed in 0u64..200, steps in 1usize..6) {
        let mut g = Prng::new(seed);
        let mut p = ParamStore::new();
        p.insert("a", Tensor::from_fn(&[3, 4], |_| g.normal()));
        p.insert("b", Tensor::from_fn(&[5], |_| g.normal()));
        let mut st = OptimState::new();
        for t in 0..steps {
            let grads: GradientSet = p.iter().map(|(k, v)| (k.clone(), Tensor::from_fn(v.shape(), |_| g.normal()))).collect();
            let before = p.clone();
            adamw_step(&mut p, &grads, &mut st, &AdamWConfig::default(), 1e-2).unwrap();
            prop_assert_eq!(st.step, t as u64 + 1);
            for (k, v) in p.iter() {
                prop_assert_eq!(st.m.get(k).unwrap().shape(), v.shape());
                prop_assert_eq!(st.v.get(k).unwrap().shape(), v.shape());
                let moved = v.sub(before.get(k).unwrap()).unwrap().max_abs();
                prop_assert!(moved <= 1e-2 * 3.2 + 1e-12);
            }
        }
    }
}

#[test]
fn schedules() {
    assert_eq!(LrSchedule::Constant.at(0.1, 7, 10), 0.1);
    assert_eq!(LrSchedule::Cosine.at(0.1, 0, 10), 0.1);
    assert!((LrSchedule::Cosine.at(0.1, 5, 10) - 0.05).abs() < 1e-15);
    assert!(LrSchedule::Cosine.at(0.1, 9, 10) < 0.003);
}

#[test]
fn freeze_mask_must_cover_every_parameter() {
    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let m = FreezeMask::from_fn(&names, |n| n != "b");
    m.check_covers(&names).unwrap();
    assert_eq!(m.trainable().count(), 2);
    assert!(m.check_covers(&names[..2]).is_err());
    let more: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
    assert!(m.check_covers(&more).is_err());
}

fn tiny() -> BackboneConfig {
    BackboneConfig::new(vec![32], 8, 2, 1, 8)
}

fn heat_1d(samples: usize) -> Dataset {
    build_dataset(&TaskSpec::heat(vec![32], 0.01, 2.0, samples, 3)).unwrap()
}

fn quick(steps: usize, lr: f64) -> TrainConfig {
    let mut c = TrainConfig { steps, batch: 4, log_every: 5, ..TrainConfig::default() };
    c.optimizer.lr = lr;
    c
}

#[test]
fn zero_learning_rate_keeps_init() {
    let cfg = PretrainConfig { backbone: tiny(), train: quick(10, 0.0) };
    let out = pretrain(&cfg, &heat_1d(20)).unwrap();
    assert_eq!(out.last.params, Model::new(tiny(), 0).unwrap().params);
    assert_eq!(out.trace.len(), 3);
    assert!(out.trace.iter().all(|r| r.train_loss.is_finite() && r.test_l2re.is_finite()));
}

#[test]
fn pretrain_reduces_training_error_on_2d_heat() {
    let ds = build_dataset(&TaskSpec::heat(vec![16, 16], 0.01, 2.0, 40, 0)).unwrap();
    let backbone = BackboneConfig::new(vec![16, 16], 8, 2, 1, 6);
    let mut train = quick(200, 1e-2);
    train.log_every = 50;
    let cfg = PretrainConfig { backbone: backbone.clone(), train };
    let out = pretrain(&cfg, &ds).unwrap();
    let (x, y) = ds.train().unwrap();
    let before = dataset_mse(&Model::new(backbone, 0).unwrap(), &x, &y, 8).unwrap();
    let after = dataset_mse(&out.last.model(), &x, &y, 8).unwrap();
    assert!(after < before, "{after} vs {before}");
    assert!(out.diverged_at.is_none());
}

#[test]
fn pretrain_is_deterministic() {
    let cfg = PretrainConfig { backbone: tiny(), train: quick(12, 3e-3) };
    let ds = heat_1d(20);
    let a = pretrain(&cfg, &ds).unwrap();
    let b = pretrain(&cfg, &ds).unwrap();
    assert_eq!(a.last.to_bytes().unwrap(), b.last.to_bytes().unwrap());
    assert_eq!(a.best.to_bytes().unwrap(), b.best.to_bytes().unwrap());
    assert_eq!(trace_to_csv(&a.trace).unwrap(), trace_to_csv(&b.trace).unwrap());
    assert!(trace_to_csv(&a.trace).unwrap().starts_with("step,train_loss,test_l2re\n0,"));
}

#[test]
fn divergence_keeps_the_last_finite_parameters() {
    let cfg = PretrainConfig { backbone: tiny(), train: quick(30, 1e200) };
    let out = pretrain(&cfg, &heat_1d(20)).unwrap();
    assert!(out.diverged_at.is_some());
    assert!(out.last.params.iter().all(|(_, t)| t.is_finite()));
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let cfg = PretrainConfig { backbone: tiny(), train: quick(6, 1e-3) };
    let ds = heat_1d(20);
    let pre = pretrain(&cfg, &ds).unwrap();
    let ft = finetune(&pre.last, &PeftConfig::new(PeftKind::FAdapter), &quick(4, 1e-3), &ds).unwrap();
    for ck in [&pre.last, &ft.checkpoint] {
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(&back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ft.ckpt");
    ft.checkpoint.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), ft.checkpoint);
    let mut bytes = ft.checkpoint.to_bytes().unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    assert!(Checkpoint::from_bytes(&bytes).unwrap_err().to_string().contains("checksum"));
    assert!(Checkpoint::from_bytes(&bytes[..10]).is_err());
}

fn kinds_config(kind: PeftKind) -> PeftConfig {
    let mut p = PeftConfig::new(kind);
    p.bands = 2;
    p.lora_rank = 2;
    p.seed = 4;
    p
}

#[test]
fn zero_steps_reproduce_the_frozen_backbone() {
    let ds = heat_1d(30);
    let pre = pretrain(&PretrainConfig { backbone: tiny(), train: quick(10, 3e-3) }, &ds).unwrap();
    let (tx, ty) = ds.test().unwrap();
    let frozen = l2re(&pre.last.model().predict(&tx, 4).unwrap(), &ty).unwrap();
    for kind in PeftKind::ALL {
        let out = finetune(&pre.last, &kinds_config(kind), &quick(0, 1e-3), &ds).unwrap();
        assert_eq!(out.report.init_test_l2re, frozen, "{kind}");
        assert_eq!(out.report.test_l2re, frozen, "{kind}");
    }
}

#[test]
fn frozen_tensors_never_move() {
    let ds = heat_1d(30);
    let pre = pretrain(&PretrainConfig { backbone: tiny(), train: quick(5, 3e-3) }, &ds).unwrap();
    for kind in PeftKind::ALL {
        let out = finetune(&pre.last, &kinds_config(kind), &quick(6, 1e-2), &ds).unwrap();
        let after = &out.checkpoint.params;
        if kind == PeftKind::Full {
            assert!(after != &pre.last.params);
            assert_eq!(out.report.trainable, out.report.total);
        } else {
            assert_eq!(after, &pre.last.params, "{kind}");
            assert_eq!(out.report.frozen_drift, 0.0);
            let (m, s) = out.checkpoint.peft.as_ref().unwrap();
            assert_eq!(out.report.trainable, m.trainable_count());
            assert_eq!(out.report.trainable, s.numel());
            assert_eq!(out.report.total, s.numel() + pre.last.params.numel());
        }
        assert!(out.trace.iter().all(|r| r.train_loss.is_finite()), "{kind}");
    }
}

#[test]
fn fadapter_formula_count_is_reported() {
    let ds = heat_1d(20);
    let pre = pretrain(&PretrainConfig { backbone: tiny(), train: quick(2, 1e-3) }, &ds).unwrap();
    let out = finetune(&pre.last, &kinds_config(PeftKind::FAdapter), &quick(1, 1e-3), &ds).unwrap();
    let s = out.checkpoint.peft.as_ref().unwrap().0.schedule.clone().unwrap();
    assert_eq!(out.report.formula, Some(count_params_eq13(4, 2, 1, &s.widths)));
}

#[test]
fn full_finetune_touches_every_parameter() {
    let model = Model::new(BackboneConfig::new(vec![32], 8, 2, 2, 8), 1).unwrap();
    let ds = heat_1d(8);
    let (x, y) = ds.stacked(0..4).unwrap();
    let mut mg = model.graph(4, Some(LossKind::Mse)).unwrap();
    let mut feed = ParamStore::new();
    feed.insert("input", x);
    feed.insert("target", y);
    let mut src = vec![&feed];
    src.extend(model.sources());
    mg.graph.forward(&src).unwrap();
    let grads = mg.graph.backward(mg.loss.unwrap()).unwrap();
    assert_eq!(grads.len(), model.params.len());
    for (name, g) in &grads {
        assert!(g.max_abs() > 0.0, "{name} has a zero gradient");
    }
}

#[test]
fn unknown_kind_lists_the_choices() {
    let err = "dora".parse::<PeftKind>().unwrap_err().to_string();
    for k in PeftKind::ALL {
        assert!(err.contains(k.name()), "{err}");
    }
}

#[test]
fn finetune_is_deterministic() {
    let ds = heat_1d(20);
    let pre = pretrain(&PretrainConfig { backbone: tiny(), train: quick(4, 1e-3) }, &ds).unwrap();
    let a = finetune(&pre.last, &kinds_config(PeftKind::Lora), &quick(8, 1e-3), &ds).unwrap();
    let b = finetune(&pre.last, &kinds_config(PeftKind::Lora), &quick(8, 1e-3), &ds).unwrap();
    assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
    assert_eq!(trace_to_csv(&a.trace).unwrap(), trace_to_csv(&b.trace).unwrap());
}

#[test]
fn train_config_defaults_and_validation() {
    let c = TrainConfig::default();
    assert_eq!((c.steps, c.batch, c.schedule, c.optimizer.lr), (300, 8, LrSchedule::Cosine, 1e-3));
    let mut bad = c.clone();
    bad.batch = 0;
    assert!(bad.validate().is_err());
    assert!(serde_json::from_str::<TrainConfig>(r#"{"stepz": 3}"#).is_err());
}
