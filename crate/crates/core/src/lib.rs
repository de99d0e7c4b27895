//! Desk-scale spectral fine-tuning laboratory.
//!
//! A small Fourier-block neural operator, a family of parameter-efficient
//! attachments (LoRA, bottleneck adapters with frequency-dependent widths,
//! polynomial and trigonometric adapter variants), the numeric substrate they
//! run on, and verifiers for the low-rank and spectral approximation bounds
//! that motivate the frequency-adaptive design.
//!
//! The numeric core ([`numerics`]) is generic over the scalar type; the model,
//! training and measurement layers run in `f64` through the [`Tensor`] alias.

pub mod autodiff;
pub mod backbone;
pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod numerics;
pub mod peft;
pub mod theory;
pub mod training;

pub use error::{Error, Result};
pub use numerics::{DenseTensor, Prng, Scalar, SpectralTensor, SvdResult};

/// Double-precision dense tensor used throughout the model stack.
pub type Tensor = DenseTensor<f64>;
/// Single-precision dense tensor.
pub type Tensor32 = DenseTensor<f32>;
/// Double-precision half spectrum.
pub type Spectrum = SpectralTensor<f64>;
/// Double-precision SVD factors.
pub type Svd = SvdResult<f64>;
