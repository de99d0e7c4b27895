use serde::{Deserialize, Serialize};

use crate::backbone::Model;
use crate::diagnostics::{energy_spectrum, relerr_energy, rmsle_spectrum_counted, SpectrumProfile};
use crate::error::{Error, Result};
use crate::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMetrics {
    pub prediction: SpectrumProfile,
    pub reference: SpectrumProfile,
    pub rmsle: f64,
    pub skipped_shells: usize,
    pub relerr_percent: f64,
}

fn mean_spectrum(fields: &Tensor) -> Result<SpectrumProfile> {
    let s = fields.shape();
    if s.len() < 3 {
        return Err(Error::config(format!("expected [N, grid..., C] fields, got {s:?}")));
    }
    let (n, c) = (s[0], s[s.len() - 1]);
    let grid = s[1..s.len() - 1].to_vec();
    let points: usize = grid.iter().product();
    let mut acc: Option<SpectrumProfile> = None;
    for i in 0..n {
        let comps: Vec<Tensor> = (0..c)
            .map(|ch| {
                let data = (0..points).map(|p| fields.data()[(i * points + p) * c + ch]).collect();
                Tensor::new(grid.clone(), data)
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor> = comps.iter().collect();
        let p = energy_spectrum(&refs, None)?;
        acc = Some(match acc {
            None => p,
            Some(mut a) => {
                a.energy.iter_mut().zip(&p.energy).for_each(|(x, y)| *x += y);
                a.residual += p.residual;
                a
            }
        });
    }
    let mut a = acc.unwrap();
    a.energy.iter_mut().for_each(|x| *x /= n as f64);
    a.residual /= n as f64;
    Ok(a)
}

/// Sample-averaged energy spectra of `model(x)` and `y`, compared by RMSLE and total-energy error.
pub fn spectrum_metrics(model: &Model, x: &Tensor, y: &Tensor, batch: usize) -> Result<SpectrumMetrics> {
    let pred = model.predict(x, batch)?;
    let prediction = mean_spectrum(&pred)?;
    let reference = mean_spectrum(y)?;
    let (rmsle, skipped_shells) = rmsle_spectrum_counted(&prediction.energy, &reference.energy)?;
    let relerr_percent = relerr_energy(&prediction.energy, &reference.energy)?;
    Ok(SpectrumMetrics { prediction, reference, rmsle, skipped_shells, relerr_percent })
}
