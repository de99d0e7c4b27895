//! Fourier-block neural operator: pointwise lift, residual spectral-mixing blocks, pointwise projection.

mod config;
mod graph;
mod model;

pub use config::BackboneConfig;
pub use graph::{build_model_graph, corner_cells, Cell, LossKind, ModelGraph};
pub use model::{init_params, Model};
