use crate::error::{Error, Result};
use crate::Tensor;

/// Relative L2 error of every sample along axis 0.
pub fn per_sample_l2re(pred: &Tensor, truth: &Tensor) -> Result<Vec<f64>> {
    if pred.shape() != truth.shape() {
        return Err(Error::config(format!("prediction {:?} and target {:?} differ in shape", pred.shape(), truth.shape())));
    }
    let n = truth.shape().first().copied().unwrap_or(0);
    if n == 0 {
        return Err(Error::config("l2re needs at least one sample"));
    }
    let row = truth.len() / n;
    let (p, t) = (pred.data(), truth.data());
    (0..n)
        .map(|i| {
            let (ps, ts) = (&p[i * row..(i + 1) * row], &t[i * row..(i + 1) * row]);
            let den = ts.iter().map(|v| v * v).sum::<f64>().sqrt();
            if den == 0.0 {
                return Err(Error::numeric(format!("sample {i} has a zero-norm target")));
            }
            let num = ps.iter().zip(ts).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            Ok(num / den)
        })
        .collect()
}

/// `(1/N) Σ ‖ŷᵢ − yᵢ‖₂ / ‖yᵢ‖₂` over the leading axis.
pub fn l2re(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    let e = per_sample_l2re(pred, truth)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}
