use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{burgers_step, heat_step_exact, sample_grf};
use crate::error::{Error, Result};
use crate::numerics::{read_tensor, write_tensor, Prng};
use crate::Tensor;

const FORMAT: &str = "splab-dataset";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Heat,
    Burgers,
}

fn d_substeps() -> usize {
    200
}

/// Recipe for a supervised one-step dataset: GRF initial states `u(0)` and targets `u(Δt)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub solver: Solver,
    pub grid: Vec<usize>,
    pub nu: f64,
    /// GRF decay exponent of the initial states.
    pub alpha: f64,
    pub dt: f64,
    /// Internal Burgers steps per `dt`; unused by the heat solver.
    #[serde(default = "d_substeps")]
    pub substeps: usize,
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

impl TaskSpec {
    pub fn heat(grid: Vec<usize>, nu: f64, alpha: f64, samples: usize, seed: u64) -> Self {
        Self { solver: Solver::Heat, grid, nu, alpha, dt: 0.1, substeps: d_substeps(), samples, seed }
    }

    pub fn burgers(grid: Vec<usize>, nu: f64, alpha: f64, samples: usize, seed: u64) -> Self {
        Self { solver: Solver::Burgers, grid, nu, alpha, dt: 0.1, substeps: d_substeps(), samples, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.solver == Solver::Burgers && (self.grid.len() != 1 || self.substeps == 0) {
            return Err(Error::config("Burgers tasks need a 1-D grid and at least one substep"));
        }
        if !(self.dt > 0.0 && self.nu >= 0.0) {
            return Err(Error::config(format!("need dt > 0 and nu >= 0, got dt={}, nu={}", self.dt, self.nu)));
        }
        Ok(())
    }

    /// Number of leading samples used for training; the remaining tenth is the test split.
    pub fn train_count(&self) -> usize {
        self.samples * 9 / 10
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub channels: usize,
    pub train: usize,
    pub test: usize,
    pub spec: TaskSpec,
}

/// One-step pairs, each field shaped `[grid..., 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<(Tensor, Tensor)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Inputs and targets of samples `r`, stacked to `[len, grid..., 1]`.
    pub fn stacked(&self, r: std::ops::Range<usize>) -> Result<(Tensor, Tensor)> {
        if r.is_empty() || r.end > self.len() {
            return Err(Error::config(format!("sample range {r:?} is empty or exceeds {} samples", self.len())));
        }
        let mut shape = vec![r.len()];
        shape.extend_from_slice(&self.sample_shape());
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (x, y) in &self.samples[r] {
            xs.extend_from_slice(x.data());
            ys.extend_from_slice(y.data());
        }
        Ok((Tensor::new(shape.clone(), xs)?, Tensor::new(shape, ys)?))
    }

    pub fn train(&self) -> Result<(Tensor, Tensor)> {
        self.stacked(0..self.header.train)
    }

    pub fn test(&self) -> Result<(Tensor, Tensor)> {
        self.stacked(self.header.train..self.len())
    }

    pub fn sample_shape(&self) -> Vec<usize> {
        let mut s = self.header.spec.grid.clone();
        s.push(self.header.channels);
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_dataset(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_dataset(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Generates the dataset described by `spec`; sample `i` uses a seed derived from `(spec.seed, i)`.
pub fn build_dataset(spec: &TaskSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.samples;
    let mut shape = spec.grid.clone();
    shape.push(1);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let seed = Prng::derive(spec.seed, i as u64).next_u64();
        let u0 = sample_grf(&spec.grid, spec.alpha, seed)?;
        let u1 = match spec.solver {
            Solver::Heat => heat_step_exact(&u0, spec.nu, spec.dt)?,
            Solver::Burgers => burgers_step(&u0, spec.nu, spec.dt / spec.substeps as f64, spec.substeps)
                .map_err(|e| Error::config(format!("sample {i}: {e}")))?,
        };
        samples.push((u0.reshape(&shape)?, u1.reshape(&shape)?));
    }
    let train = spec.train_count();
    Ok(Dataset {
        header: DatasetHeader {
            format: FORMAT.into(),
            version: VERSION,
            channels: 1,
            train,
            test: n - train,
            spec: spec.clone(),
        },
        samples,
    })
}

/// u64 little-endian header length, JSON header, then an (input, target) tensor pair per sample.
pub fn write_dataset<W: Write>(w: &mut W, ds: &Dataset) -> Result<()> {
    let header = serde_json::to_vec(&ds.header)?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    for (x, y) in &ds.samples {
        write_tensor(w, x)?;
        write_tensor(w, y)?;
    }
    Ok(())
}

pub fn read_dataset<R: Read>(r: &mut R) -> Result<Dataset> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 24 {
        return Err(Error::Format(format!("dataset header length {len} is implausible")));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    let header: DatasetHeader = serde_json::from_slice(&buf)?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::Format(format!("unsupported dataset format {} v{}", header.format, header.version)));
    }
    let n = header.train + header.test;
    if n != header.spec.samples {
        return Err(Error::Format(format!("header counts {n} samples, spec says {}", header.spec.samples)));
    }
    let mut sample = header.spec.grid.clone();
    sample.push(header.channels);
    let mut read = |i: usize| -> Result<Tensor> {
        let t = read_tensor(r).map_err(|e| Error::Format(format!("sample {i}: {e}")))?;
        if t.shape() != sample.as_slice() {
            return Err(Error::Format(format!("sample {i} has shape {:?}, expected {sample:?}", t.shape())));
        }
        Ok(t)
    };
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        samples.push((read(i)?, read(i)?));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after the last sample".into()));
    }
    Ok(Dataset { header, samples })
}
