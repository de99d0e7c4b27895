//! Numerical verifiers for the low-rank and spectral approximation bounds, and the
//! adapter-versus-truncation probe.

mod adapter_error;
mod decay;
mod lowrank;
mod report;
mod tail;
mod truncation_experiment;

use serde::{Deserialize, Serialize};

pub use adapter_error::{
    spatial_control_instance, per_mode_target, train_scalar_adapter, truncation_tail_bound, truncation_tail_sum,
    verify_adapter_error_decomposition, AdapterErrorReport,
};
pub use decay::{check_decay, decay_constant, sobolev_test_field, spectral_derivative, verify_spectral_decay};
pub use lowrank::{
    blockdiag_singular_values, check_blockwise_instance, eckart_young_truncate, verify_blockwise_lora_bound, BlockwiseReport,
};
pub use report::{fit_slope, BoundReport, TrialRecord};
pub use tail::{tail_energies, verify_tail_energy_split};
pub use truncation_experiment::{
    adapter_vs_truncation_experiment, random_orthogonal, synthetic_activations, synthetic_delta_w, train_mlp_probe,
    ProbeConfig, ProbeRow, ProbeTable,
};

fn d_trials() -> usize {
    100
}
fn d_alpha() -> f64 {
    2.0
}
fn d_one_f() -> f64 {
    1.0
}
fn d_dims() -> usize {
    1
}
fn d_cutoffs() -> Vec<usize> {
    vec![4, 8, 16, 32]
}
fn d_widths() -> Vec<usize> {
    vec![1, 2, 4, 8, 16]
}
fn d_blocks() -> usize {
    4
}
fn d_block_width() -> usize {
    16
}
fn d_inputs() -> usize {
    50
}
fn d_seeds() -> usize {
    3
}
fn d_steps() -> usize {
    10_000
}
fn d_true() -> bool {
    true
}
fn d_restarts() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Decay exponent `α`.
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    /// Sobolev order `s`.
    #[serde(default = "d_one_f")]
    pub sobolev: f64,
    /// Sobolev bound `M`.
    #[serde(default = "d_one_f")]
    pub m_sob: f64,
    #[serde(default = "d_dims")]
    pub dims: usize,
    #[serde(default = "d_cutoffs")]
    pub cutoffs: Vec<usize>,
    /// Adapter widths `m` for the width term.
    #[serde(default = "d_widths")]
    pub widths: Vec<usize>,
    #[serde(default = "d_seeds")]
    pub width_seeds: usize,
    #[serde(default = "d_steps")]
    pub adapter_steps: usize,
    /// Independent trainings per width; `ε(m)` is the smallest sup error among them.
    #[serde(default = "d_restarts")]
    pub adapter_restarts: usize,
    /// Train widths in ascending order, each continuing from the previous width's adapter.
    #[serde(default = "d_true")]
    pub width_continuation: bool,
    #[serde(default = "d_blocks")]
    pub max_blocks: usize,
    #[serde(default = "d_block_width")]
    pub max_block_width: usize,
    #[serde(default = "d_inputs")]
    pub inputs_per_trial: usize,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}
