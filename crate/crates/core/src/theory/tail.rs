use super::report::fit_slope;
use super::{BoundReport, TheoryConfig};
use crate::error::{Error, Result};

/// `Σ_{‖k‖>K} f(‖k‖²)` over the lattice box `|k_j| ≤ radius`, for each cutoff.
pub(crate) fn lattice_tails(dims: usize, radius: i64, cutoffs: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut tails = vec![0.0; cutoffs.len()];
    let sq: Vec<f64> = cutoffs.iter().map(|k| k * k).collect();
    let mut add = |n2: f64, mult: f64| {
        let v = mult * f(n2);
        for (t, &c) in tails.iter_mut().zip(&sq) {
            if n2 > c {
                *t += v;
            }
        }
    };
    match dims {
        1 => {
            for k in 1..=radius {
                add((k * k) as f64, 2.0);
            }
        }
        2 => {
            for a in 0..=radius {
                for b in a..=radius {
                    if a == 0 && b == 0 {
                        continue;
                    }
                    let mult = if a == 0 || a == b { 4.0 } else { 8.0 };
                    add((a * a + b * b) as f64, mult);
                }
            }
        }
        _ => unreachable!("dims checked by caller"),
    }
    tails
}

/// High-frequency energy `Σ_{‖k‖>K} M²(1+‖k‖²)^{−s}` of the extremal envelope for each cutoff.
pub fn tail_energies(dims: usize, s: f64, m_sob: f64, cutoffs: &[usize], radius: i64) -> Result<Vec<f64>> {
    if !(1..=2).contains(&dims) {
        return Err(Error::config(format!("tail sums support d in {{1, 2}}, got {dims}")));
    }
    let ks: Vec<f64> = cutoffs.iter().map(|&k| k as f64).collect();
    Ok(lattice_tails(dims, radius, &ks, |n2| m_sob * m_sob * (1.0 + n2).powf(-s)))
}

/// Fitted tail slope against `d − 2s` and monotone decrease over the configured cutoffs.
pub fn verify_tail_energy_split(cfg: &TheoryConfig) -> Result<BoundReport> {
    let (d, s) = (cfg.dims, cfg.sobolev);
    if s <= d as f64 / 2.0 {
        return Err(Error::config(format!("tail split needs s > d/2, got s={s}, d={d}")));
    }
    let radius = if d == 1 { 4096 } else { 2048 };
    let tails = tail_energies(d, s, cfg.m_sob, &cfg.cutoffs, radius)?;
    let mut rep = BoundReport::new(&format!("tail-energy d={d} s={s}"));
    let xs: Vec<f64> = cfg.cutoffs.iter().map(|&k| (k as f64).ln()).collect();
    let ys: Vec<f64> = tails.iter().map(|t| t.ln()).collect();
    let slope = fit_slope(&xs, &ys);
    let want = d as f64 - 2.0 * s;
    rep.metrics.insert("slope".into(), slope);
    rep.metrics.insert("expected_slope".into(), want);
    rep.check((slope - want).abs(), 0.3, 0.0, false, "slope deviation from d - 2s");
    for (i, w) in tails.windows(2).enumerate() {
        rep.check(w[1], w[0], 0.0, false, format!("tail decreases from K={} to K={}", cfg.cutoffs[i], cfg.cutoffs[i + 1]));
    }
    for (k, t) in cfg.cutoffs.iter().zip(&tails) {
        rep.metrics.insert(format!("tail_K{k}"), *t);
        rep.metrics.insert(format!("ratio_K{k}"), t / (cfg.m_sob * cfg.m_sob * (*k as f64).powf(want)));
    }
    Ok(rep)
}
