use crate::error::{Error, Result};
use crate::numerics::{for_each_index, irfftn, rfftn, wavenumber};
use crate::Tensor;

/// Exact solution operator of `∂ₜu = ν Δu` on the periodic unit cube: `û(k) ← û(k)·exp(−ν(2π‖k‖)²·dt)`.
pub fn heat_step_exact(u: &Tensor, nu: f64, dt: f64) -> Result<Tensor> {
    if !(nu >= 0.0 && dt > 0.0) {
        return Err(Error::config(format!("heat step needs nu >= 0 and dt > 0, got nu={nu}, dt={dt}")));
    }
    let axes: Vec<usize> = (0..u.rank()).collect();
    let mut s = rfftn(u, &axes)?;
    let src = s.source_shape.clone();
    let ha = src.len() - 1;
    let shape = s.shape().to_vec();
    let tau = 2.0 * std::f64::consts::PI;
    let mut factors = Vec::with_capacity(s.real.len());
    for_each_index(&shape, |idx| {
        let k2: f64 = idx.iter().enumerate().map(|(a, &i)| (wavenumber(i, src[a], a == ha) as f64).powi(2)).sum();
        factors.push((-nu * tau * tau * k2 * dt).exp());
    });
    for (v, f) in s.real.data_mut().iter_mut().zip(&factors) {
        *v *= f;
    }
    for (v, f) in s.imag.data_mut().iter_mut().zip(&factors) {
        *v *= f;
    }
    irfftn(&s)
}
