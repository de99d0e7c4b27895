//! Measurement pipelines: relative errors, weight-update spectra, drop-high curves and energy spectra.

mod delta_w;
mod drop_high;
mod l2re;
mod spectrum;

pub use delta_w::{delta_w_report, effective_rank, modes_to_energy, DeltaWEntry, DeltaWReport};
pub use drop_high::{drop_high_curve, drop_high_filter, DropHighPoint};
pub use l2re::{l2re, per_sample_l2re};
pub use spectrum::{energy_spectrum, relerr_energy, rmsle_spectrum, rmsle_spectrum_counted, SpectrumProfile};
