use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{rfftn, shell_bin};
use crate::Tensor;

/// Shell-averaged energy `E(k)` on integer shells `0..=k_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumProfile {
    pub energy: Vec<f64>,
    /// Energy beyond `k_max`.
    pub residual: f64,
}

impl SpectrumProfile {
    pub fn k_max(&self) -> usize {
        self.energy.len().saturating_sub(1)
    }

    pub fn total(&self) -> f64 {
        self.energy.iter().sum::<f64>() + self.residual
    }
}

/// Sum over components of shell-binned `½|û|²`. Every component must share one grid; all axes are transformed.
/// Without `k_max` the shells reach the largest radius on the grid.
pub fn energy_spectrum(components: &[&Tensor], k_max: Option<usize>) -> Result<SpectrumProfile> {
    let first = components.first().ok_or_else(|| Error::config("energy spectrum needs at least one component"))?;
    let grid = first.shape().to_vec();
    let axes: Vec<usize> = (0..grid.len()).collect();
    let k_max = k_max.unwrap_or_else(|| grid.iter().map(|&n| ((n / 2) * (n / 2)) as f64).sum::<f64>().sqrt().ceil() as usize);
    let mut energy = vec![0.0; k_max + 1];
    let mut residual = 0.0;
    for c in components {
        if c.shape() != grid.as_slice() {
            return Err(Error::config(format!("component grid {:?} differs from {:?}", c.shape(), grid)));
        }
        let e = shell_bin(&rfftn(c, &axes)?, k_max + 1);
        for (acc, v) in energy.iter_mut().zip(&e.shells) {
            *acc += v;
        }
        residual += e.residual;
    }
    Ok(SpectrumProfile { energy, residual })
}

/// RMSLE in base 10 plus the number of shells skipped because either side is below `1e-300`.
pub fn rmsle_spectrum_counted(e_pred: &[f64], e_ref: &[f64]) -> Result<(f64, usize)> {
    if e_pred.len() != e_ref.len() {
        return Err(Error::config(format!("spectra have {} and {} shells", e_pred.len(), e_ref.len())));
    }
    let mut acc = 0.0;
    let mut used = 0usize;
    for (&p, &r) in e_pred.iter().zip(e_ref) {
        if p < 1e-300 || r < 1e-300 {
            continue;
        }
        let l = (p / r).log10();
        acc += l * l;
        used += 1;
    }
    if used == 0 {
        return Err(Error::numeric("no shell has positive energy in both spectra"));
    }
    Ok(((acc / used as f64).sqrt(), e_pred.len() - used))
}

/// `√((1/N) Σ (log₁₀ E_pred − log₁₀ E_ref)²)` over comparable shells.
pub fn rmsle_spectrum(e_pred: &[f64], e_ref: &[f64]) -> Result<f64> {
    rmsle_spectrum_counted(e_pred, e_ref).map(|r| r.0)
}

fn trapezoid(e: &[f64]) -> f64 {
    if e.len() == 1 {
        return e[0];
    }
    e.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum()
}

/// `|E_tot,pred − E_tot,ref| / E_tot,ref · 100` with `E_tot` the trapezoidal integral over unit-spaced shells.
pub fn relerr_energy(e_pred: &[f64], e_ref: &[f64]) -> Result<f64> {
    if e_pred.len() != e_ref.len() {
        return Err(Error::config(format!("spectra have {} and {} shells", e_pred.len(), e_ref.len())));
    }
    let r = trapezoid(e_ref);
    if r <= 0.0 {
        return Err(Error::numeric("reference spectrum carries no energy"));
    }
    Ok((trapezoid(e_pred) - r).abs() / r * 100.0)
}
