//! Synthetic PDE data: Gaussian random fields, the exact periodic heat propagator,
//! a pseudo-spectral viscous Burgers solver and the dataset file format.

mod burgers;
mod dataset;
mod grf;
mod heat;

pub use burgers::{burgers_rollout, burgers_step};
pub use dataset::{build_dataset, read_dataset, write_dataset, Dataset, DatasetHeader, Solver, TaskSpec};
pub use grf::{grf_spectrum, sample_grf};
pub use heat::heat_step_exact;
