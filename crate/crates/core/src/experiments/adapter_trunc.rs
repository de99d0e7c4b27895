use serde::{Deserialize, Serialize};

use super::run_indexed;
use crate::error::Result;
use crate::theory::{adapter_vs_truncation_experiment, synthetic_activations, synthetic_delta_w, ProbeConfig, ProbeTable};

fn d_rows() -> usize {
    20_000
}
fn d_dim() -> usize {
    64
}
fn d_gamma() -> f64 {
    0.5
}
fn d_capacities() -> Vec<usize> {
    vec![4, 8, 16, 32]
}
fn d_seeds() -> Vec<u64> {
    (0..3).collect()
}

/// Synthetic `ΔW` with `σ_i = 1/√i` applied to anisotropic activations; adapter width `m` is compared with truncation rank `r = m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterTruncConfig {
    #[serde(default = "d_rows")]
    pub rows: usize,
    #[serde(default = "d_dim")]
    pub dim: usize,
    /// Activation anisotropy: column `i` of the latent factor is scaled by `i^{−γ}`.
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_capacities")]
    pub capacities: Vec<usize>,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub probe: ProbeConfig,
}

impl Default for AdapterTruncConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterTruncSeed {
    pub seed: u64,
    pub table: ProbeTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterTruncReport {
    pub seeds: Vec<AdapterTruncSeed>,
}

impl AdapterTruncReport {
    /// Seeds where the adapter beats truncation at the largest capacity.
    pub fn wins_at_max(&self) -> usize {
        self.seeds
            .iter()
            .filter(|s| s.table.rows.last().is_some_and(|r| r.adapter_rmse < r.truncation_rmse))
            .count()
    }

    pub fn truncation_monotone(&self) -> bool {
        self.seeds.iter().all(|s| s.table.rows.windows(2).all(|w| w[1].truncation_rmse <= w[0].truncation_rmse))
    }
}

pub fn adapter_trunc_experiment(cfg: &AdapterTruncConfig, threads: usize) -> Result<AdapterTruncReport> {
    let sigma: Vec<f64> = (1..=cfg.dim).map(|i| 1.0 / (i as f64).sqrt()).collect();
    let budgets: Vec<(usize, usize)> = cfg.capacities.iter().map(|&m| (m, m)).collect();
    let seeds = run_indexed(cfg.seeds.len(), threads, |i| {
        let seed = cfg.seeds[i];
        let h = synthetic_activations(cfg.rows, cfg.dim, cfg.gamma, seed)?;
        let dw = synthetic_delta_w(&sigma, seed ^ 0x5eed)?;
        let probe = ProbeConfig { seed, ..cfg.probe.clone() };
        Ok(AdapterTruncSeed { seed, table: adapter_vs_truncation_experiment(&h, &dw, &budgets, &probe)? })
    })?;
    Ok(AdapterTruncReport { seeds })
}
