use crate::numerics::{half_weights, SpectralTensor};
use crate::Tensor;

const GELU_C: f64 = 0.797_884_560_802_865_4; // √(2/π)
const GELU_A: f64 = 0.044715;

/// Tanh-form GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub(crate) fn pack(s: &SpectralTensor<f64>) -> Tensor {
    let mut shape = vec![2];
    shape.extend_from_slice(s.shape());
    let mut data = Vec::with_capacity(2 * s.real.len());
    data.extend_from_slice(s.real.data());
    data.extend_from_slice(s.imag.data());
    Tensor::new(shape, data).expect("packed spectrum shape")
}

pub(crate) fn unpack(t: &Tensor, source_shape: &[usize], axes: &[usize]) -> SpectralTensor<f64> {
    let half = t.shape()[1..].to_vec();
    let n = t.len() / 2;
    SpectralTensor {
        real: Tensor::new(half.clone(), t.data()[..n].to_vec()).expect("spectral plane"),
        imag: Tensor::new(half, t.data()[n..].to_vec()).expect("spectral plane"),
        source_shape: source_shape.to_vec(),
        axes: axes.to_vec(),
    }
}

/// Multiplies (or divides) a packed spectrum by the half-axis bin multiplicities.
pub(crate) fn weight_half_axis(t: &mut Tensor, half_axis: usize, n: usize, divide: bool) {
    let w = half_weights(n);
    let shape = t.shape().to_vec();
    let inner: usize = shape[half_axis + 2..].iter().product();
    let h = shape[half_axis + 1];
    for (flat, v) in t.data_mut().iter_mut().enumerate() {
        let k = (flat / inner) % h;
        if divide {
            *v /= w[k];
        } else {
            *v *= w[k];
        }
    }
}

/// Row-wise normalization over the last axis: returns (y, inverse std per row).
pub(crate) fn layer_norm(x: &Tensor, eps: f64) -> (Tensor, Vec<f64>) {
    let n = x.cols();
    let rows = x.len() / n;
    let mut y = x.clone();
    let mut inv = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &mut y.data_mut()[r * n..(r + 1) * n];
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let is = 1.0 / (var + eps).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * is;
        }
        inv.push(is);
    }
    (y, inv)
}

pub(crate) fn layer_norm_backward(y: &Tensor, inv: &[f64], g: &Tensor) -> Tensor {
    let n = y.cols();
    let mut out = g.clone();
    for (r, &is) in inv.iter().enumerate() {
        let yr = &y.data()[r * n..(r + 1) * n];
        let gr = &g.data()[r * n..(r + 1) * n];
        let mg = gr.iter().sum::<f64>() / n as f64;
        let mgy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        for (j, o) in out.data_mut()[r * n..(r + 1) * n].iter_mut().enumerate() {
            *o = is * (gr[j] - mg - yr[j] * mgy);
        }
    }
    out
}
