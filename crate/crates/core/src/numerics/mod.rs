//! Dense tensors, FFT, SVD, shell binning, binary IO and the seeded generator.

mod fft;
mod io;
mod prng;
mod scalar;
mod shell;
mod svd;
mod tensor;

pub use fft::{half_weights, irfftn, naive_dft, rfftn, SpectralTensor};
pub use io::{read_tensor, read_tensor_from, tensor_from_bytes, tensor_to_bytes, write_tensor, write_tensor_to};
pub use prng::Prng;
pub use scalar::Scalar;
pub use shell::{shell_bin, wavenumber, ShellEnergies};
pub use svd::{jacobi_svd, spectral_norm, SvdResult};
pub use tensor::{for_each_index, DenseTensor};
