//! Parameter-efficient attachments: band schedules, bottleneck and variant adapters, LoRA.

mod adapter;
mod manifest;
mod schedule;

pub use adapter::{
    adapter_forward, chebyshev_adapter_forward, fourierkan_adapter_forward, kaiming_uniform, lora_forward,
    waveact_adapter_forward, AdapterParams, ChebyshevParams, FourierKanParams, LoraParams, WaveActParams,
};
pub use manifest::{
    attach, build_adapter, lora_delta, matched_lora_rank, AdapterSlot, LoraSlot, PeftConfig, PeftKind, PeftManifest,
    Stage,
};
pub use schedule::{
    actual_fadapter_count, allocate_widths, band_boundaries, bias_surplus, count_params_eq13, inverse_widths,
    BandSchedule,
};
