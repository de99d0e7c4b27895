//! AdamW, pretraining and PEFT fine-tuning loops, checkpoints and metric traces.

mod checkpoint;
mod config;
mod fit;
mod optim;
mod trace;

pub use checkpoint::{Checkpoint, OptimizerRecord};
pub use config::{FreezeMask, LrSchedule, TrainConfig};
pub use fit::{
    dataset_mse, finetune, fit, pretrain, FinetuneOutcome, FinetuneReport, FitOutcome, PretrainConfig, TrainOutcome,
};
pub use optim::{adamw_step, AdamWConfig, OptimState};
pub use trace::{trace_to_csv, write_trace_csv, TraceRow};
