use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::numerics::jacobi_svd;
use crate::Tensor;

fn sigmas(w: &Tensor) -> Result<Vec<f64>> {
    if w.rank() != 2 {
        return Err(Error::config(format!("expected a matrix, got shape {:?}", w.shape())));
    }
    let mut s = jacobi_svd(w)?.sigma;
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

fn rank_of(s: &[f64], tau: f64) -> usize {
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v >= tau * top).count(),
        _ => 0,
    }
}

fn energy_count(s: &[f64], zeta: f64) -> usize {
    let total: f64 = s.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (i, v) in s.iter().enumerate() {
        acc += v * v;
        if acc >= zeta * total {
            return i + 1;
        }
    }
    s.len()
}

/// Number of singular values at least `tau·σ₁`. A zero matrix has rank 0 and logs a warning.
pub fn effective_rank(w: &Tensor, tau: f64) -> Result<usize> {
    let s = sigmas(w)?;
    if s.first().is_none_or(|&v| v == 0.0) {
        log::warn!("effective rank of a zero matrix of shape {:?}", w.shape());
    }
    Ok(rank_of(&s, tau))
}

/// Smallest `n` with `Σ_{i≤n} σᵢ² ≥ zeta·Σ σᵢ²`.
pub fn modes_to_energy(w: &Tensor, zeta: f64) -> Result<usize> {
    Ok(energy_count(&sigmas(w)?, zeta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaWEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub singular_values: Vec<f64>,
    pub effective_rank: usize,
    pub modes_to_energy: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaWReport {
    pub tau: f64,
    pub zeta: f64,
    pub entries: Vec<DeltaWEntry>,
}

/// SVD statistics of `finetuned − pretrained` for every shared tensor of rank ≥ 2,
/// each flattened to `[∏ leading axes, last axis]`.
pub fn delta_w_report(pretrained: &ParamStore, finetuned: &ParamStore, tau: f64, zeta: f64) -> Result<DeltaWReport> {
    let mut entries = Vec::new();
    for (name, base) in pretrained.iter() {
        let Some(tuned) = finetuned.get(name) else { continue };
        if base.rank() < 2 {
            continue;
        }
        let dw = tuned.sub(base)?;
        let cols = *dw.shape().last().unwrap();
        let rows = dw.len() / cols;
        let s = sigmas(&dw.reshape(&[rows, cols])?)?;
        entries.push(DeltaWEntry {
            name: name.clone(),
            rows,
            cols,
            effective_rank: rank_of(&s, tau),
            modes_to_energy: energy_count(&s, zeta),
            singular_values: s,
        });
    }
    Ok(DeltaWReport { tau, zeta, entries })
}
