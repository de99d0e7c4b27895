use crate::error::{Error, Result};
use crate::numerics::{for_each_index, irfftn, wavenumber, Prng};
use crate::{Spectrum, Tensor};

fn check_grid(grid: &[usize]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|n| !n.is_power_of_two() || *n < 2) {
        return Err(Error::config(format!("grid {grid:?} must have power-of-two axes >= 2")));
    }
    Ok(())
}

/// Unitary half spectrum of a GRF sample: `(1 + ‖k‖²)^{−α/2}·g_k` with complex standard normal `g_k`,
/// Hermitian on the self-conjugate planes of the halved axis, then scaled by `√N` so that `u(x) = Σ_k û_k e^{2πik·x}`.
pub fn grf_spectrum(grid: &[usize], alpha: f64, seed: u64) -> Result<Spectrum> {
    check_grid(grid)?;
    let d = grid.len() as f64;
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(alpha > d / 2.0) {
        return Err(Error::config(format!("GRF decay alpha = {alpha} must exceed d/2 = {}", d / 2.0)));
    }
    let axes: Vec<usize> = (0..grid.len()).collect();
    let ha = grid.len() - 1;
    let mut s = Spectrum::zeros(grid, &axes)?;
    let shape = s.shape().to_vec();
    let strides = s.real.strides();
    let root_n = (grid.iter().product::<usize>() as f64).sqrt();
    let mut rng = Prng::new(seed);
    let mut flat = 0;
    let (mut re, mut im) = (s.real.data().to_vec(), s.imag.data().to_vec());
    for_each_index(&shape, |idx| {
        let k2: f64 = idx.iter().enumerate().map(|(a, &i)| (wavenumber(i, grid[a], a == ha) as f64).powi(2)).sum();
        let amp = root_n * (1.0 + k2).powf(-alpha / 2.0) * std::f64::consts::FRAC_1_SQRT_2;
        let (gr, gi) = (rng.normal(), rng.normal());
        re[flat] = amp * gr;
        im[flat] = amp * gi;
        let self_plane = idx[ha] == 0 || 2 * idx[ha] == grid[ha];
        if self_plane {
            let mirror: usize = idx
                .iter()
                .enumerate()
                .map(|(a, &i)| if a == ha { i } else { (grid[a] - i) % grid[a] } * strides[a])
                .sum();
            if mirror == flat {
                im[flat] = 0.0;
            } else if mirror < flat {
                re[flat] = re[mirror];
                im[flat] = -im[mirror];
            }
        }
        flat += 1;
    });
    s.real.data_mut().copy_from_slice(&re);
    s.imag.data_mut().copy_from_slice(&im);
    Ok(s)
}

/// Real periodic field on `grid` with Fourier amplitudes `(1 + ‖k‖²)^{−α/2}·g_k`; deterministic in `seed`.
pub fn sample_grf(grid: &[usize], alpha: f64, seed: u64) -> Result<Tensor> {
    irfftn(&grf_spectrum(grid, alpha, seed)?)
}
