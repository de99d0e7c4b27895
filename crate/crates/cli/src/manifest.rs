use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use splab::Result;

pub const MANIFEST: &str = "manifest.json";

/// Everything needed to rerun a subcommand: pass this file back through `--config`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Value,
    pub seed: u64,
    pub threads: usize,
    pub artifacts: Vec<PathBuf>,
    pub git_describe: String,
    pub started_unix: f64,
    pub wall_clock_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// Run bookkeeping: the output directory, written artifacts and timing.
pub struct Run {
    pub out: PathBuf,
    pub subcommand: String,
    pub seed: u64,
    pub threads: usize,
    pub config: Value,
    artifacts: Vec<PathBuf>,
    started: SystemTime,
    clock: Instant,
}

impl Run {
    pub fn new(out: PathBuf, subcommand: &str, seed: u64, threads: usize) -> Result<Self> {
        std::fs::create_dir_all(&out)?;
        Ok(Self {
            out,
            subcommand: subcommand.into(),
            seed,
            threads,
            config: Value::Null,
            artifacts: Vec::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
        })
    }

    /// Path of an artifact named `{stem}_{seed}.{ext}`, registered in the manifest.
    pub fn seeded(&mut self, stem: &str, ext: &str) -> PathBuf {
        self.artifact(&format!("{stem}_{}.{ext}", self.seed))
    }

    pub fn artifact(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.artifacts.push(p.clone());
        p
    }

    pub fn write_json(&mut self, path: &Path, v: &impl Serialize) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(v)?)?;
        Ok(())
    }

    pub fn finish(self, error: Option<String>) -> Result<PathBuf> {
        let m = RunManifest {
            subcommand: self.subcommand,
            config: self.config,
            seed: self.seed,
            threads: self.threads,
            artifacts: self.artifacts,
            git_describe: git_describe(),
            started_unix: self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
            wall_clock_seconds: self.clock.elapsed().as_secs_f64(),
            error,
        };
        let path = self.out.join(MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(&m)?)?;
        Ok(path)
    }
}
