use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use splab::backbone::BackboneConfig;
use splab::datagen::{build_dataset, Dataset, TaskSpec};
use splab::diagnostics::delta_w_report;
use splab::experiments::{
    adapter_trunc_experiment, compare, drop_high_experiment, spectrum_metrics, AdapterTruncConfig, DropHighConfig,
    TransferConfig,
};
use splab::peft::{BandSchedule, PeftConfig, PeftKind};
use splab::theory::{
    verify_adapter_error_decomposition, verify_blockwise_lora_bound, verify_spectral_decay, verify_tail_energy_split,
    BoundReport, TheoryConfig,
};
use splab::training::{finetune, pretrain, write_trace_csv, Checkpoint, PretrainConfig, TraceRow, TrainConfig};
use splab::{Error, Result};

use crate::manifest::Run;
use crate::resolve::{resolve, Overrides};
use crate::{Cli, Command, Global, TrainFlags};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainRun {
    #[serde(default)]
    pub data: Option<PathBuf>,
    pub task: TaskSpec,
    pub backbone: BackboneConfig,
    pub train: TrainConfig,
}

impl Default for PretrainRun {
    fn default() -> Self {
        let t = TransferConfig::default();
        Self { data: None, task: t.pretrain_task, backbone: t.backbone, train: t.pretrain }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneRun {
    #[serde(default)]
    pub base: Option<PathBuf>,
    #[serde(default)]
    pub data: Option<PathBuf>,
    pub task: TaskSpec,
    pub peft: PeftConfig,
    pub train: TrainConfig,
}

impl Default for FinetuneRun {
    fn default() -> Self {
        let t = TransferConfig::default();
        Self { base: None, data: None, task: t.finetune_task, peft: t.peft, train: t.finetune }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseDwRun {
    #[serde(default)]
    pub base: Option<PathBuf>,
    #[serde(default)]
    pub tuned: Option<PathBuf>,
    pub tau: f64,
    pub zeta: f64,
}

impl Default for DiagnoseDwRun {
    fn default() -> Self {
        Self { base: None, tuned: None, tau: 0.01, zeta: 0.9 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumRun {
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub data: Option<PathBuf>,
    pub task: TaskSpec,
    pub batch: usize,
}

impl Default for SpectrumRun {
    fn default() -> Self {
        Self { model: None, data: None, task: TransferConfig::default().finetune_task, batch: 8 }
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var("SPLAB_SEED") {
        Ok(s) if !s.is_empty() => s.trim().parse().map(Some).map_err(|_| Error::config(format!("SPLAB_SEED={s} is not an integer"))),
        _ => Ok(None),
    }
}

struct Ctx {
    global: Global,
    env_seed: Option<u64>,
}

impl Ctx {
    fn threads(&self) -> usize {
        self.global.threads.unwrap_or(0)
    }

    /// Resolves a config, placing the effective seed at each of `seed_paths`.
    fn resolve<T: Serialize + serde::de::DeserializeOwned>(
        &self,
        defaults: T,
        seed_paths: &[&str],
        mut flags: Overrides,
    ) -> Result<(T, serde_json::Value)> {
        let mut env = Overrides::default();
        for p in seed_paths {
            env.set(p, self.env_seed);
            flags.set(p, self.global.seed);
        }
        resolve(defaults, &env, self.global.config.as_deref(), &flags)
    }

    fn run(&self, name: &str, seed: u64) -> Result<Run> {
        let out = self.global.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(name));
        Run::new(out, name, seed, self.threads())
    }
}

fn train_flags(o: &mut Overrides, prefix: &str, t: &TrainFlags) {
    o.set(&format!("{prefix}.steps"), t.steps)
        .set(&format!("{prefix}.batch"), t.batch)
        .set(&format!("{prefix}.log_every"), t.log_every)
        .set(&format!("{prefix}.optimizer.lr"), t.lr);
}

fn load_or_build(data: &Option<PathBuf>, task: &TaskSpec) -> Result<Dataset> {
    match data {
        Some(p) => Dataset::load(p).map_err(|e| Error::config(format!("cannot load dataset {}: {e}", p.display()))),
        None => build_dataset(task),
    }
}

fn load_checkpoint(p: &Option<PathBuf>, flag: &str) -> Result<Checkpoint> {
    let p = p.as_ref().ok_or_else(|| Error::Usage(format!("--{flag} <checkpoint> is required")))?;
    Checkpoint::load(p).map_err(|e| match e {
        Error::Io(io) => Error::config(format!("cannot read checkpoint {}: {io}", p.display())),
        other => other,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::config(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::config(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    write_trace_csv(std::fs::File::create(path)?, rows)
}

fn seed_list(first: Option<u64>, n: Option<u64>, default: &[u64]) -> Option<Vec<u64>> {
    match (first, n) {
        (None, None) => None,
        (f, n) => {
            let f = f.unwrap_or(0);
            Some((f..f + n.unwrap_or(default.len() as u64)).collect())
        }
    }
}

/// Finalizes the manifest, then reports `result`.
fn finish(run: Run, result: Result<()>) -> Result<()> {
    let err = result.as_ref().err().map(|e| e.to_string());
    run.finish(err)?;
    result
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx { global: cli.global, env_seed: env_seed()? };
    match cli.command {
        Command::Schedule(a) => {
            let s = BandSchedule::new(a.modes, a.bands, a.rmin, a.rmax, a.p, a.inverse)?;
            let w: Vec<String> = s.widths.iter().map(|w| w.to_string()).collect();
            println!("{}", w.join(" "));
            Ok(())
        }
        Command::GenData(a) => {
            let mut f = Overrides::default();
            f.set("solver", a.solver)
                .set("grid", a.grid)
                .set("nu", a.nu)
                .set("alpha", a.alpha)
                .set("dt", a.dt)
                .set("substeps", a.substeps)
                .set("samples", a.samples);
            let (spec, v): (TaskSpec, _) = ctx.resolve(TransferConfig::default().pretrain_task, &["seed"], f)?;
            let mut run = ctx.run("gen-data", spec.seed)?;
            run.config = v;
            let path = run.artifact("dataset.bin");
            let res = build_dataset(&spec).and_then(|ds| {
                ds.save(&path)?;
                println!("wrote {} samples ({} train, {} test) to {}", ds.len(), ds.header.train, ds.header.test, path.display());
                Ok(())
            });
            finish(run, res)
        }
        Command::Pretrain(a) => {
            let mut f = Overrides::default();
            f.set("data", a.data);
            train_flags(&mut f, "train", &a.train);
            let (cfg, v): (PretrainRun, _) = ctx.resolve(PretrainRun::default(), &["train.seed"], f)?;
            let mut run = ctx.run("pretrain", cfg.train.seed)?;
            run.config = v;
            let res = (|| {
                let ds = load_or_build(&cfg.data, &cfg.task)?;
                let out = pretrain(&PretrainConfig { backbone: cfg.backbone.clone(), train: cfg.train.clone() }, &ds)?;
                out.last.save(&run.artifact("last.ckpt"))?;
                out.best.save(&run.artifact("best.ckpt"))?;
                let trace = run.seeded("pretrain", "csv");
                write_trace(&trace, &out.trace)?;
                if let Some(row) = out.trace.last() {
                    println!("pretrain: step {} train_loss {:.6e} test_l2re {:.6}", row.step, row.train_loss, row.test_l2re);
                }
                match out.diverged_at {
                    Some(step) => Err(Error::numeric(format!("training diverged at step {step}; last good checkpoint saved"))),
                    None => Ok(()),
                }
            })();
            finish(run, res)
        }
        Command::Finetune(a) => {
            let mut f = Overrides::default();
            let kind = a.kind.as_deref().map(str::parse::<PeftKind>).transpose()?;
            f.set("base", a.base)
                .set("data", a.data)
                .set("peft.kind", kind)
                .set("peft.lora_rank", a.rank)
                .set("peft.adapter_width", a.adapter_width);
            train_flags(&mut f, "train", &a.train);
            let (cfg, v): (FinetuneRun, _) = ctx.resolve(FinetuneRun::default(), &["train.seed", "peft.seed"], f)?;
            let base = load_checkpoint(&cfg.base, "base")?;
            let mut run = ctx.run("finetune", cfg.train.seed)?;
            run.config = v;
            let res = (|| {
                let ds = load_or_build(&cfg.data, &cfg.task)?;
                let out = finetune(&base, &cfg.peft, &cfg.train, &ds)?;
                out.checkpoint.save(&run.artifact("finetuned.ckpt"))?;
                let trace = run.seeded("finetune", "csv");
                write_trace(&trace, &out.trace)?;
                let report = run.seeded("finetune", "json");
                run.write_json(&report, &out.report)?;
                let r = &out.report;
                println!(
                    "finetune {}: trainable {}/{} test_l2re {:.6} (init {:.6})",
                    r.kind, r.trainable, r.total, r.test_l2re, r.init_test_l2re
                );
                match out.diverged_at {
                    Some(step) => Err(Error::numeric(format!("training diverged at step {step}; last good checkpoint saved"))),
                    None => Ok(()),
                }
            })();
            finish(run, res)
        }
        Command::Compare(a) => {
            let d = TransferConfig::default();
            let mut f = Overrides::default();
            let kinds = a.kinds.map(|ks| ks.iter().map(|k| k.parse::<PeftKind>()).collect::<Result<Vec<_>>>()).transpose()?;
            f.set("seeds", seed_list(ctx.global.seed, a.seeds, &d.seeds))
                .set("kinds", kinds)
                .set("pretrain.steps", a.pretrain_steps)
                .set("finetune.steps", a.finetune_steps);
            let (cfg, v): (TransferConfig, _) = ctx.resolve(d, &[], f)?;
            let mut run = ctx.run("compare", cfg.seeds.first().copied().unwrap_or(0))?;
            run.config = v;
            let res = (|| {
                let rep = compare(&cfg, ctx.threads())?;
                let json = run.seeded("compare", "json");
                run.write_json(&json, &rep)?;
                #[derive(Serialize)]
                struct Row {
                    kind: PeftKind,
                    seed: u64,
                    trainable: usize,
                    init_test_l2re: f64,
                    test_l2re: f64,
                }
                let csv = run.seeded("compare", "csv");
                write_csv(
                    &csv,
                    rep.runs.iter().map(|r| Row {
                        kind: r.kind,
                        seed: r.seed,
                        trainable: r.trainable,
                        init_test_l2re: r.init_test_l2re,
                        test_l2re: r.test_l2re,
                    }),
                )?;
                println!("compare: pretrained test_l2re {:.6}", rep.pretrain_test_l2re);
                for b in &rep.budgets {
                    println!("  {:<18} trainable {:>6}  mean test_l2re {:.6}", b.kind.name(), b.trainable, rep.mean_test_l2re[&b.kind]);
                }
                if let Some(c) = &rep.checks {
                    println!(
                        "  adapter<lora {}  f-adapter<=adapter {}  adapter<=f-inverse {}  f-inverse gap seeds {}/{}",
                        c.adapter_below_lora, c.fadapter_le_adapter, c.adapter_le_finverse, c.finverse_gap_seeds, cfg.seeds.len()
                    );
                }
                Ok(())
            })();
            finish(run, res)
        }
        Command::DropHigh(a) => {
            let d = DropHighConfig::default();
            let mut f = Overrides::default();
            f.set("bands", a.bands).set("seeds", seed_list(ctx.global.seed, a.seeds, &d.seeds)).set("train.steps", a.steps);
            let (cfg, v): (DropHighConfig, _) = ctx.resolve(d, &[], f)?;
            let mut run = ctx.run("drop-high", cfg.seeds.first().copied().unwrap_or(0))?;
            run.config = v;
            let res = (|| {
                let rep = drop_high_experiment(&cfg, ctx.threads())?;
                let json = run.seeded("drop_high", "json");
                run.write_json(&json, &rep)?;
                #[derive(Serialize)]
                struct Row {
                    seed: u64,
                    cutoff: usize,
                    l2re: f64,
                }
                let csv = run.seeded("drop_high", "csv");
                write_csv(
                    &csv,
                    rep.seeds.iter().flat_map(|s| s.curve.iter().map(move |p| Row { seed: s.seed, cutoff: p.cutoff, l2re: p.l2re })),
                )?;
                for s in &rep.seeds {
                    println!(
                        "drop-high seed {}: baseline {:.6} identity_exact {} non_increasing {} flat_top {}",
                        s.seed, s.baseline_l2re, s.identity_exact, s.non_increasing, s.flat_top
                    );
                }
                Ok(())
            })();
            finish(run, res)
        }
        Command::DiagnoseDw(a) => {
            let mut f = Overrides::default();
            f.set("base", a.base).set("tuned", a.tuned).set("tau", a.tau).set("zeta", a.zeta);
            let (cfg, v): (DiagnoseDwRun, _) = ctx.resolve(DiagnoseDwRun::default(), &[], f)?;
            let base = load_checkpoint(&cfg.base, "base")?;
            let tuned = load_checkpoint(&cfg.tuned, "tuned")?;
            if tuned.peft.is_some() {
                return Err(Error::config("diagnose-dw compares dense weights; the tuned checkpoint carries PEFT attachments (use --kind full)"));
            }
            let mut run = ctx.run("diagnose-dw", ctx.global.seed.or(ctx.env_seed).unwrap_or(0))?;
            run.config = v;
            let res = (|| {
                let rep = delta_w_report(&base.params, &tuned.params, cfg.tau, cfg.zeta)?;
                let json = run.seeded("diagnose_dw", "json");
                run.write_json(&json, &rep)?;
                #[derive(Serialize)]
                struct Row<'a> {
                    name: &'a str,
                    rows: usize,
                    cols: usize,
                    sigma_max: f64,
                    effective_rank: usize,
                    modes_to_energy: usize,
                }
                let csv = run.seeded("diagnose_dw", "csv");
                write_csv(
                    &csv,
                    rep.entries.iter().map(|e| Row {
                        name: &e.name,
                        rows: e.rows,
                        cols: e.cols,
                        sigma_max: e.singular_values.first().copied().unwrap_or(0.0),
                        effective_rank: e.effective_rank,
                        modes_to_energy: e.modes_to_energy,
                    }),
                )?;
                println!("diagnose-dw: {} matrices", rep.entries.len());
                Ok(())
            })();
            finish(run, res)
        }
        Command::Spectrum(a) => {
            let mut f = Overrides::default();
            f.set("model", a.model).set("data", a.data);
            let (cfg, v): (SpectrumRun, _) = ctx.resolve(SpectrumRun::default(), &["task.seed"], f)?;
            let ck = load_checkpoint(&cfg.model, "model")?;
            let mut run = ctx.run("spectrum", cfg.task.seed)?;
            run.config = v;
            let res = (|| {
                let ds = load_or_build(&cfg.data, &cfg.task)?;
                let (x, y) = ds.test()?;
                let m = spectrum_metrics(&ck.model(), &x, &y, cfg.batch)?;
                let json = run.seeded("spectrum", "json");
                run.write_json(&json, &m)?;
                #[derive(Serialize)]
                struct Row {
                    k: usize,
                    prediction: f64,
                    reference: f64,
                }
                let csv = run.seeded("spectrum", "csv");
                write_csv(
                    &csv,
                    m.prediction.energy.iter().zip(&m.reference.energy).enumerate().map(|(k, (p, r))| Row { k, prediction: *p, reference: *r }),
                )?;
                println!("spectrum: rmsle {:.6} relerr {:.4}% skipped shells {}", m.rmsle, m.relerr_percent, m.skipped_shells);
                Ok(())
            })();
            finish(run, res)
        }
        Command::AdapterVsTrunc(a) => {
            let d = AdapterTruncConfig::default();
            let mut f = Overrides::default();
            f.set("rows", a.rows)
                .set("dim", a.dim)
                .set("gamma", a.gamma)
                .set("probe.steps", a.steps)
                .set("seeds", seed_list(ctx.global.seed, a.seeds, &d.seeds));
            let (cfg, v): (AdapterTruncConfig, _) = ctx.resolve(d, &[], f)?;
            let mut run = ctx.run("adapter-vs-trunc", cfg.seeds.first().copied().unwrap_or(0))?;
            run.config = v;
            let res = (|| {
                let rep = adapter_trunc_experiment(&cfg, ctx.threads())?;
                let json = run.seeded("adapter_vs_trunc", "json");
                run.write_json(&json, &rep)?;
                #[derive(Serialize)]
                struct Row {
                    seed: u64,
                    width: usize,
                    rank: usize,
                    adapter_rmse: f64,
                    truncation_rmse: f64,
                }
                let csv = run.seeded("adapter_vs_trunc", "csv");
                write_csv(
                    &csv,
                    rep.seeds.iter().flat_map(|s| {
                        s.table.rows.iter().map(move |r| Row {
                            seed: s.seed,
                            width: r.width,
                            rank: r.rank,
                            adapter_rmse: r.adapter_rmse,
                            truncation_rmse: r.truncation_rmse,
                        })
                    }),
                )?;
                println!(
                    "adapter-vs-trunc: adapter wins at max capacity in {}/{} seeds; truncation monotone {}",
                    rep.wins_at_max(),
                    rep.seeds.len(),
                    rep.truncation_monotone()
                );
                Ok(())
            })();
            finish(run, res)
        }
        Command::VerifyTheory(a) => {
            let mut f = Overrides::default();
            f.set("trials", a.trials);
            let (cfg, v): (TheoryConfig, _) = ctx.resolve(TheoryConfig::default(), &["seed"], f)?;
            let mut run = ctx.run("verify-theory", cfg.seed)?;
            run.config = serde_json::json!({ "prop": a.prop, "theory": v });
            let res = (|| {
                let props: Vec<&str> = if a.prop == "all" { vec!["1", "2", "3"] } else { vec![a.prop.as_str()] };
                for p in props {
                    let reports = theory_reports(p, &cfg)?;
                    let passed = reports.iter().all(|r| r.passed());
                    for r in &reports {
                        println!("prop {p} {}: {}/{} trials pass", r.name, r.pass_count(), r.trials.len());
                    }
                    let path = run.seeded(&format!("theory_prop{p}"), "json");
                    let body = serde_json::json!({ "proposition": p, "passed": passed, "reports": reports });
                    run.write_json(&path, &body)?;
                }
                Ok(())
            })();
            finish(run, res)
        }
    }
}

fn theory_reports(prop: &str, cfg: &TheoryConfig) -> Result<Vec<BoundReport>> {
    Ok(match prop {
        "1" => {
            let r = verify_blockwise_lora_bound(cfg)?;
            r.all().into_iter().cloned().collect()
        }
        "2" => {
            let r = verify_adapter_error_decomposition(cfg)?;
            let mut out = vec![r.truncation, r.width, r.spatial_control];
            for dims in [1, 2] {
                out.push(verify_spectral_decay(&TheoryConfig { dims, ..cfg.clone() })?);
            }
            out
        }
        _ => {
            let mut out = Vec::new();
            for (dims, sobolev) in [(1, 1.0), (1, 2.0), (2, 2.0)] {
                out.push(verify_tail_energy_split(&TheoryConfig { dims, sobolev, ..cfg.clone() })?);
            }
            out
        }
    })
}
