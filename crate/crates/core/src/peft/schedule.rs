use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `b_b = ⌊b·M/B⌋` for `b = 0..=B`.
pub fn band_boundaries(modes: usize, bands: usize) -> Result<Vec<usize>> {
    if bands == 0 || bands > modes {
        return Err(Error::config(format!("need 1 <= bands <= modes, got bands={bands}, modes={modes}")));
    }
    Ok((0..=bands).map(|b| b * modes / bands).collect())
}

fn centers(boundaries: &[usize]) -> Vec<f64> {
    boundaries.windows(2).map(|w| 0.5 * (w[0] + w[1]) as f64).collect()
}

fn floor_tol(x: f64) -> usize {
    (x + 1e-9 * x.abs().max(1.0)).floor().max(0.0) as usize
}

fn check_range(r_min: f64, r_max: f64, p: f64) -> Result<()> {
    if !(r_min >= 0.0 && r_min <= r_max && r_max.is_finite()) {
        return Err(Error::config(format!("need 0 <= r_min <= r_max, got {r_min}, {r_max}")));
    }
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::config(format!("curvature exponent p must be positive, got {p}")));
    }
    Ok(())
}

/// Wide low bands, narrow high bands: `⌊r_min + (r_max − r_min)(1 − f_b/M)^p⌋`.
pub fn allocate_widths(r_min: f64, r_max: f64, p: f64, boundaries: &[usize], modes: usize) -> Result<Vec<usize>> {
    check_range(r_min, r_max, p)?;
    let m = modes as f64;
    Ok(centers(boundaries).iter().map(|f| floor_tol(r_min + (r_max - r_min) * (1.0 - f / m).powf(p))).collect())
}

/// Reversed allocation: `⌊r_min + (r_max − r_min)(f_b/M)^p⌋`.
pub fn inverse_widths(r_min: f64, r_max: f64, p: f64, boundaries: &[usize], modes: usize) -> Result<Vec<usize>> {
    check_range(r_min, r_max, p)?;
    let m = modes as f64;
    Ok(centers(boundaries).iter().map(|f| floor_tol(r_min + (r_max - r_min) * (f / m).powf(p))).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSchedule {
    pub modes: usize,
    pub bands: usize,
    pub boundaries: Vec<usize>,
    pub centers: Vec<f64>,
    pub r_min: f64,
    pub r_max: f64,
    pub p: f64,
    pub inverse: bool,
    pub widths: Vec<usize>,
}

impl BandSchedule {
    pub fn new(modes: usize, bands: usize, r_min: f64, r_max: f64, p: f64, inverse: bool) -> Result<Self> {
        let boundaries = band_boundaries(modes, bands)?;
        let widths = if inverse {
            inverse_widths(r_min, r_max, p, &boundaries, modes)?
        } else {
            allocate_widths(r_min, r_max, p, &boundaries, modes)?
        };
        Ok(Self { modes, bands, centers: centers(&boundaries), boundaries, r_min, r_max, p, inverse, widths })
    }

    /// Same bands with every width replaced by `w`.
    pub fn uniform(&self, w: usize) -> Self {
        Self { widths: vec![w; self.bands], ..self.clone() }
    }

    pub fn band_range(&self, b: usize) -> std::ops::Range<usize> {
        self.boundaries[b]..self.boundaries[b + 1]
    }
}

/// Closed-form adapter parameter count `(2d+1)·K·(2+h_t)·Σr_b` for one layer.
pub fn count_params_eq13(d: usize, k: usize, h_t: usize, widths: &[usize]) -> u64 {
    (2 * d as u64 + 1) * k as u64 * (2 + h_t as u64) * widths.iter().map(|&w| w as u64).sum::<u64>()
}

/// Trainable entries of one layer's in/mid/out bottleneck adapters, biases included.
pub fn actual_fadapter_count(d: usize, k: usize, h_t: usize, widths: &[usize]) -> u64 {
    let one = |dim: usize, r: usize| if r == 0 { 0 } else { (2 * dim * r + r + dim) as u64 };
    let dh = d * h_t;
    widths.iter().map(|&r| k as u64 * (2 * one(d, r) + one(dh, r))).sum()
}

/// Up-projection biases for one layer: `K·B·(2d + d·h_t)` over bands with nonzero width.
pub fn bias_surplus(d: usize, k: usize, h_t: usize, widths: &[usize]) -> u64 {
    let bands = widths.iter().filter(|&&w| w > 0).count() as u64;
    k as u64 * bands * (2 * d + d * h_t) as u64
}
