//! Desk-scale experiment drivers: the LoRA-vs-adapter transfer comparison, drop-high curves,
//! the adapter-versus-truncation probe and prediction energy-spectrum metrics.

mod adapter_trunc;
mod drop_high;
mod spectrum;
mod transfer;

pub use adapter_trunc::{adapter_trunc_experiment, AdapterTruncConfig, AdapterTruncReport, AdapterTruncSeed};
pub use drop_high::{drop_high_experiment, DropHighConfig, DropHighReport, DropHighSeed};
pub use spectrum::{spectrum_metrics, SpectrumMetrics};
pub use transfer::{compare, pretrain_backbone, BudgetRow, CompareReport, RunRecord, TransferConfig, TrendChecks};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::Result;

/// Evaluates `f(0..n)` on up to `threads` workers (0 or 1 = calling thread) and returns results in index order.
pub fn run_indexed<T: Send>(n: usize, threads: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    if threads <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.min(n) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let r = f(i);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|r| r.expect("every index evaluated")).collect()
}
