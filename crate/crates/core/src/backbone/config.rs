use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    /// Spatial grid; one or two power-of-two axes.
    pub grid: Vec<usize>,
    #[serde(default = "one")]
    pub in_channels: usize,
    #[serde(default = "one")]
    pub out_channels: usize,
    /// Latent channels `C`.
    pub width: usize,
    /// Channel blocks `K`; `d = C/K`.
    pub blocks: usize,
    pub layers: usize,
    /// Retained modes `M` per transformed axis.
    pub modes: usize,
    /// Hidden expansion `h_t` between the two spectral mixings.
    #[serde(default = "one")]
    pub temporal_modes: usize,
    /// Adapt the full L∞ annulus of each band instead of the diagonal square only.
    #[serde(default)]
    pub annulus_bands: bool,
    #[serde(default = "yes")]
    pub pointwise_mlp: bool,
    /// GELU between the two spectral mixings; switching it off is a test hook.
    #[serde(default = "yes")]
    pub kernel_activation: bool,
}

impl BackboneConfig {
    pub fn new(grid: Vec<usize>, width: usize, blocks: usize, layers: usize, modes: usize) -> Self {
        Self {
            grid,
            in_channels: 1,
            out_channels: 1,
            width,
            blocks,
            layers,
            modes,
            temporal_modes: 1,
            annulus_bands: false,
            pointwise_mlp: true,
            kernel_activation: true,
        }
    }

    pub fn spatial_dims(&self) -> usize {
        self.grid.len()
    }

    pub fn block_width(&self) -> usize {
        self.width / self.blocks.max(1)
    }

    pub fn points(&self) -> usize {
        self.grid.iter().product()
    }

    /// Spectral shape per sample: the last axis halved.
    pub fn half_grid(&self) -> Vec<usize> {
        let mut s = self.grid.clone();
        if let Some(l) = s.last_mut() {
            *l = *l / 2 + 1;
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.grid.len()) {
            return Err(Error::config(format!("grid must have 1 or 2 axes, got {:?}", self.grid)));
        }
        if let Some(&n) = self.grid.iter().find(|n| !n.is_power_of_two() || **n < 2) {
            return Err(Error::config(format!("grid axis {n} is not a power of two >= 2")));
        }
        if self.width == 0 || self.blocks == 0 || !self.width.is_multiple_of(self.blocks) {
            return Err(Error::config(format!("width {} is not divisible by {} blocks", self.width, self.blocks)));
        }
        if self.in_channels == 0 || self.out_channels == 0 || self.temporal_modes == 0 {
            return Err(Error::config("channel counts and temporal modes must be positive"));
        }
        let cap = self.grid.iter().min().unwrap() / 2 + 1;
        if self.modes == 0 || self.modes > cap {
            return Err(Error::config(format!("retained modes {} must be in 1..={cap}", self.modes)));
        }
        Ok(())
    }

    /// Every backbone tensor with its shape.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (c, k, d) = (self.width, self.blocks, self.block_width());
        let dh = d * self.temporal_modes;
        let mut out = vec![
            ("lift.weight".to_string(), vec![self.in_channels, c]),
            ("lift.bias".to_string(), vec![c]),
        ];
        for l in 0..self.layers {
            for part in ["re", "im"] {
                out.push((format!("layers.{l}.w1.{part}"), vec![k, d, dh]));
                out.push((format!("layers.{l}.w2.{part}"), vec![k, dh, d]));
            }
            if self.pointwise_mlp {
                out.push((format!("layers.{l}.mlp.w1"), vec![c, c]));
                out.push((format!("layers.{l}.mlp.b1"), vec![c]));
                out.push((format!("layers.{l}.mlp.w2"), vec![c, c]));
                out.push((format!("layers.{l}.mlp.b2"), vec![c]));
            }
        }
        out.push(("project.weight".to_string(), vec![c, self.out_channels]));
        out.push(("project.bias".to_string(), vec![self.out_channels]));
        out.sort();
        out
    }
}
