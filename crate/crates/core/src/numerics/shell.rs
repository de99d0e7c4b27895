use super::fft::half_weights;
use super::tensor::for_each_index;
use super::{Scalar, SpectralTensor};

/// Per-shell energies plus whatever fell beyond the last shell.
#[derive(Clone, Debug, PartialEq)]
pub struct ShellEnergies<T> {
    pub shells: Vec<T>,
    pub residual: T,
}

impl<T: Scalar> ShellEnergies<T> {
    pub fn total(&self) -> T {
        self.shells.iter().copied().sum::<T>() + self.residual
    }
}

/// Signed integer wavenumber of spectral index `i` on an axis of length `n`.
/// The halved axis already stores only non-negative wavenumbers.
pub fn wavenumber(i: usize, n: usize, halved: bool) -> i64 {
    if halved || i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Accumulates `½|x̂(k)|²` into shells `round(‖k‖) = 0..num_shells`; axes not transformed are summed over.
pub fn shell_bin<T: Scalar>(s: &SpectralTensor<T>, num_shells: usize) -> ShellEnergies<T> {
    let ha = s.half_axis();
    let w = half_weights(s.source_shape[ha]);
    let mut shells = vec![T::zero(); num_shells];
    let mut residual = T::zero();
    let (re, im) = (s.real.data(), s.imag.data());
    let shape = s.shape().to_vec();
    let half = T::lit(0.5);
    let mut flat = 0;
    for_each_index(&shape, |idx| {
        let k2: f64 = s
            .axes
            .iter()
            .map(|&a| {
                let k = wavenumber(idx[a], s.source_shape[a], a == ha) as f64;
                k * k
            })
            .sum();
        let e = half * T::lit(w[idx[ha]]) * (re[flat] * re[flat] + im[flat] * im[flat]);
        let j = k2.sqrt().round() as usize;
        if j < num_shells {
            shells[j] += e;
        } else {
            residual += e;
        }
        flat += 1;
    });
    ShellEnergies { shells, residual }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{rfftn, DenseTensor, Prng};

    #[test]
    fn single_mode_lands_in_its_shell() {
        let x = DenseTensor::<f64>::from_fn(&[32], |i| (2.0 * std::f64::consts::PI * 3.0 * i[0] as f64 / 32.0).sin());
        let e = shell_bin(&rfftn(&x, &[0]).unwrap(), 17);
        for (j, &v) in e.shells.iter().enumerate() {
            if j == 3 {
                assert!((v - 8.0).abs() < 1e-12);
            } else {
                assert!(v < 1e-20);
            }
        }
    }

    #[test]
    fn parseval_bookkeeping_2d() {
        let mut g = Prng::new(4);
        let x = DenseTensor::<f64>::from_fn(&[16, 32], |_| g.normal());
        let s = rfftn(&x, &[0, 1]).unwrap();
        let half_energy: f64 = 0.5 * x.data().iter().map(|v| v * v).sum::<f64>();
        for n in [1, 5, 12, 30] {
            let e = shell_bin(&s, n);
            assert!((e.total() - half_energy).abs() <= 1e-10 * half_energy);
        }
    }

    #[test]
    fn negative_wavenumbers() {
        assert_eq!(wavenumber(7, 8, false), -1);
        assert_eq!(wavenumber(4, 8, false), 4);
        assert_eq!(wavenumber(4, 8, true), 4);
    }
}
