use serde::{Deserialize, Serialize};

use super::l2re;
use crate::backbone::Model;
use crate::error::{Error, Result};
use crate::numerics::{for_each_index, irfftn, rfftn, wavenumber};
use crate::peft::band_boundaries;
use crate::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropHighPoint {
    pub cutoff: usize,
    pub l2re: f64,
}

fn band_of(bd: &[usize], k: usize) -> usize {
    bd.windows(2).position(|w| k < w[1]).unwrap_or(bd.len() - 2)
}

/// Zeroes every spectral coefficient of `x: [N, grid..., C]` whose band index is `≥ cutoff`.
/// Each axis splits `|k| ∈ 0..=n/2` into `num_bands` uniform index ranges; a coefficient's band is the largest over axes.
/// `cutoff ≥ num_bands` returns `x` untouched.
pub fn drop_high_filter(x: &Tensor, num_bands: usize, cutoff: usize) -> Result<Tensor> {
    let dims = x.rank().checked_sub(2).filter(|&d| d > 0).ok_or_else(|| {
        Error::config(format!("drop-high input must be [N, grid..., C], got {:?}", x.shape()))
    })?;
    let axes: Vec<usize> = (1..=dims).collect();
    let bounds = axes
        .iter()
        .map(|&a| band_boundaries(x.shape()[a] / 2 + 1, num_bands))
        .collect::<Result<Vec<_>>>()?;
    if cutoff >= num_bands {
        return Ok(x.clone());
    }
    let mut s = rfftn(x, &axes)?;
    let shape = s.shape().to_vec();
    let src = s.source_shape.clone();
    let mut flat = 0;
    let mut kill = Vec::new();
    for_each_index(&shape, |idx| {
        let band = axes
            .iter()
            .zip(&bounds)
            .map(|(&a, bd)| band_of(bd, wavenumber(idx[a], src[a], a == dims).unsigned_abs() as usize))
            .max()
            .unwrap();
        if band >= cutoff {
            kill.push(flat);
        }
        flat += 1;
    });
    for i in kill {
        s.real.data_mut()[i] = 0.0;
        s.imag.data_mut()[i] = 0.0;
    }
    irfftn(&s)
}

/// Mean L2RE of `model` on band-filtered inputs for cutoffs `0..=num_bands`.
pub fn drop_high_curve(
    model: &Model,
    inputs: &Tensor,
    targets: &Tensor,
    num_bands: usize,
    batch: usize,
) -> Result<Vec<DropHighPoint>> {
    (0..=num_bands)
        .map(|cutoff| {
            let x = drop_high_filter(inputs, num_bands, cutoff)?;
            let y = model.predict(&x, batch)?;
            Ok(DropHighPoint { cutoff, l2re: l2re(&y, targets)? })
        })
        .collect()
}
