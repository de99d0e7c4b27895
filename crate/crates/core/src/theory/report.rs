use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One verified instance: the measured quantity against its bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub observed: f64,
    pub bound: f64,
    /// Signed slack; negative when the bound is violated.
    pub margin: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub trials: Vec<TrialRecord>,
    /// Fitted slopes, rates and other scalar summaries.
    pub metrics: BTreeMap<String, f64>,
    pub caveats: Vec<String>,
}

impl BoundReport {
    pub fn new(name: &str) -> Self {
        Self { name: name.to_string(), ..Self::default() }
    }

    /// Records `observed ≥ bound − tol` (`lower = true`) or `observed ≤ bound + tol`.
    pub fn check(&mut self, observed: f64, bound: f64, tol: f64, lower: bool, detail: impl Into<String>) -> bool {
        let margin = if lower { observed - bound } else { bound - observed };
        let pass = margin >= -tol && observed.is_finite();
        let trial = self.trials.len();
        self.trials.push(TrialRecord { trial, observed, bound, margin, pass, detail: detail.into() });
        pass
    }

    pub fn push(&mut self, rec: TrialRecord) {
        self.trials.push(rec);
    }

    pub fn pass_count(&self) -> usize {
        self.trials.iter().filter(|t| t.pass).count()
    }

    pub fn passed(&self) -> bool {
        !self.trials.is_empty() && self.trials.iter().all(|t| t.pass)
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
