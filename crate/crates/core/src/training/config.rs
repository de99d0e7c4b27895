use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AdamWConfig;
use crate::backbone::LossKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    Cosine,
}

impl LrSchedule {
    /// Learning rate for 0-based step `t` of `total`.
    pub fn at(self, base: f64, t: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => 0.5 * base * (1.0 + (std::f64::consts::PI * t as f64 / total.max(1) as f64).cos()),
        }
    }
}

fn d_steps() -> usize {
    300
}
fn d_batch() -> usize {
    8
}
fn d_schedule() -> LrSchedule {
    LrSchedule::Cosine
}
fn d_loss() -> LossKind {
    LossKind::Mse
}
fn d_log() -> usize {
    25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_steps")]
    pub steps: usize,
    #[serde(default = "d_batch")]
    pub batch: usize,
    #[serde(default = "d_schedule")]
    pub schedule: LrSchedule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_loss")]
    pub loss: LossKind,
    /// Trace and best-checkpoint cadence in optimizer steps.
    #[serde(default = "d_log")]
    pub log_every: usize,
    #[serde(default)]
    pub optimizer: AdamWConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.log_every == 0 {
            return Err(Error::config("batch size and log interval must be positive"));
        }
        let o = &self.optimizer;
        if !(o.lr >= 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.eps > 0.0) {
            return Err(Error::config(format!("invalid optimizer settings {o:?}")));
        }
        Ok(())
    }
}

/// Trainable flag for every parameter name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FreezeMask(pub BTreeMap<String, bool>);

impl FreezeMask {
    pub fn from_fn<'a>(names: impl IntoIterator<Item = &'a String>, trainable: impl Fn(&str) -> bool) -> Self {
        FreezeMask(names.into_iter().map(|n| (n.clone(), trainable(n))).collect())
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.0.get(name).copied().unwrap_or(false)
    }

    pub fn trainable(&self) -> impl Iterator<Item = &String> {
        self.0.iter().filter(|(_, &t)| t).map(|(k, _)| k)
    }

    /// Fails unless the mask names exactly `names`.
    pub fn check_covers<'a>(&self, names: impl IntoIterator<Item = &'a String>) -> Result<()> {
        let want: std::collections::BTreeSet<&String> = names.into_iter().collect();
        let have: std::collections::BTreeSet<&String> = self.0.keys().collect();
        if want != have {
            let missing: Vec<_> = want.difference(&have).collect();
            let extra: Vec<_> = have.difference(&want).collect();
            return Err(Error::config(format!("freeze mask mismatch: missing {missing:?}, unknown {extra:?}")));
        }
        Ok(())
    }
}
