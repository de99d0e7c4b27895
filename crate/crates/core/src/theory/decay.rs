use super::report::fit_slope;
use super::{BoundReport, TheoryConfig};
use crate::error::{Error, Result};
use crate::numerics::{irfftn, rfftn, wavenumber, SpectralTensor};
use crate::Tensor;

/// `Π_j (1 − cos x_j)^β` sampled on `n^d` points of `[0, 2π)^d`.
pub fn sobolev_test_field(dims: usize, n: usize, beta: f64) -> Tensor {
    let shape = vec![n; dims];
    Tensor::from_fn(&shape, |i| {
        i.iter().map(|&j| (1.0 - (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos()).powf(beta)).product()
    })
}

fn axes(dims: usize) -> Vec<usize> {
    (0..dims).collect()
}

/// Fourier coefficients normalized as `(2π)^{-d}∫ g e^{-ik·x}`.
fn coefficients(g: &Tensor) -> Result<SpectralTensor<f64>> {
    let mut s = rfftn(g, &axes(g.rank()))?;
    let c = 1.0 / (g.len() as f64).sqrt();
    s.real = s.real.scale(c);
    s.imag = s.imag.scale(c);
    Ok(s)
}

fn signed_k(s: &SpectralTensor<f64>, idx: &[usize]) -> Vec<i64> {
    let ha = s.half_axis();
    s.axes.iter().map(|&a| wavenumber(idx[a], s.source_shape[a], a == ha)).collect()
}

/// `∂_j^α g` by spectral differentiation, with Nyquist bins dropped.
pub fn spectral_derivative(g: &Tensor, axis: usize, order: u32) -> Result<Tensor> {
    let s = rfftn(g, &axes(g.rank()))?;
    let n = g.shape()[axis];
    let mut out = s.clone();
    crate::numerics::for_each_index(s.shape(), |idx| {
        let (mut a, mut b) = if idx[axis] == n / 2 { (0.0, 0.0) } else { (s.real.get(idx), s.imag.get(idx)) };
        let k = signed_k(&s, idx)[axis] as f64;
        for _ in 0..order {
            (a, b) = (-k * b, k * a);
        }
        out.real.set(idx, a);
        out.imag.set(idx, b);
    });
    irfftn(&out)
}

/// Envelope constant `2^{α/2}·d^{α/2}·max(‖g‖₁, max_j ‖∂_j^α g‖₁)` under the normalized measure.
pub fn decay_constant(g: &Tensor, alpha: u32) -> Result<f64> {
    let d = g.rank() as f64;
    let l1 = |t: &Tensor| t.data().iter().map(|v| v.abs()).sum::<f64>() / t.len() as f64;
    let mut m = l1(g);
    for j in 0..g.rank() {
        m = m.max(l1(&spectral_derivative(g, j, alpha)?));
    }
    Ok(2f64.powf(alpha as f64 / 2.0) * d.powf(alpha as f64 / 2.0) * m)
}

/// Envelope `|ĝ_k| ≤ C(1+‖k‖²)^{−α/2}` over every coefficient, plus the fitted decay slope on `k ∈ [2, 32]` along the last axis.
pub fn check_decay(g: &Tensor, alpha: u32) -> Result<BoundReport> {
    let mut rep = BoundReport::new("spectral-decay");
    let c = decay_constant(g, alpha)?;
    let s = coefficients(g)?;
    let shape = s.shape().to_vec();
    let floor = 1e-13 * g.max_abs().max(1e-300);
    let mut worst = f64::INFINITY;
    let mut worst_at = (0.0, 0.0);
    crate::numerics::for_each_index(&shape, |idx| {
        let k2: f64 = signed_k(&s, idx).iter().map(|&k| (k * k) as f64).sum();
        let mag = s.real.get(idx).hypot(s.imag.get(idx));
        let env = c * (1.0 + k2).powf(-(alpha as f64) / 2.0);
        if env + floor - mag < worst {
            worst = env + floor - mag;
            worst_at = (mag, env);
        }
    });
    rep.check(worst_at.0, worst_at.1, floor, false, format!("C = {c:.6e}, worst envelope slack"));
    rep.metrics.insert("constant".into(), c);

    let ha = s.half_axis();
    let kmax = 32.min(g.shape()[ha] / 2);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for k in 2..=kmax {
        let mut idx = vec![0; g.rank()];
        idx[ha] = k;
        let mag = s.real.get(&idx).hypot(s.imag.get(&idx));
        if mag > floor {
            xs.push((k as f64).ln());
            ys.push(mag.ln());
        }
    }
    if xs.len() >= 2 {
        let slope = fit_slope(&xs, &ys);
        rep.metrics.insert("slope".into(), slope);
        rep.check(slope, -(alpha as f64) + 0.3, 0.0, false, "log-log decay slope on k in [2, 32]");
    } else {
        rep.caveats.push("fewer than two coefficients above round-off on k in [2, 32]; slope not fitted".into());
    }
    Ok(rep)
}

/// Envelope and slope check on `Π_j (1 − cos x_j)^{α+½}`, which has exactly `2α` derivatives.
pub fn verify_spectral_decay(cfg: &TheoryConfig) -> Result<BoundReport> {
    if cfg.alpha < 1.0 || cfg.alpha.fract() != 0.0 || !(1..=2).contains(&cfg.dims) {
        return Err(Error::config(format!("spectral decay needs integer alpha >= 1 and d in {{1, 2}}, got {} and {}", cfg.alpha, cfg.dims)));
    }
    let n = if cfg.dims == 1 { 512 } else { 128 };
    let g = sobolev_test_field(cfg.dims, n, cfg.alpha + 0.5);
    let mut rep = check_decay(&g, cfg.alpha as u32)?;
    rep.name = format!("spectral-decay d={} alpha={}", cfg.dims, cfg.alpha);
    Ok(rep)
}
