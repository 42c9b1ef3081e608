use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::Padding;
use crate::data::{GridShape, WindowedDataset};
use crate::{Error, Result};

/// Two conv layers, each followed by batch norm and ReLU, then max pooling
/// and dropout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnHeadConfig {
    pub filters: [usize; 2],
    pub kernels: [usize; 2],
    pub strides: [usize; 2],
    pub padding: Padding,
    pub pool: usize,
    pub pool_stride: usize,
    pub dropout: f64,
}

impl Default for CnnHeadConfig {
    fn default() -> Self {
        CnnHeadConfig { filters: [264, 128], kernels: [4, 2], strides: [1, 1], padding: Padding::Same, pool: 2, pool_stride: 2, dropout: 0.2 }
    }
}

fn conv_out(n: usize, k: usize, s: usize, padding: Padding) -> Option<usize> {
    match padding {
        Padding::Same => Some(n.div_ceil(s)),
        Padding::Valid => n.checked_sub(k).map(|d| d / s + 1),
    }
}

impl CnnHeadConfig {
    /// `(height, width, channels)` after pooling, or `None` if the grid is
    /// too small for the stack.
    pub fn output_shape(&self, grid: GridShape) -> Option<(usize, usize, usize)> {
        let mut h = grid.height;
        let mut w = grid.width;
        for l in 0..2 {
            h = conv_out(h, self.kernels[l], self.strides[l], self.padding)?;
            w = conv_out(w, self.kernels[l], self.strides[l], self.padding)?;
        }
        h = conv_out(h, self.pool, self.pool_stride, Padding::Valid)?;
        w = conv_out(w, self.pool, self.pool_stride, Padding::Valid)?;
        (h > 0 && w > 0).then_some((h, w, self.filters[1]))
    }

    pub fn output_width(&self, grid: GridShape) -> Option<usize> {
        self.output_shape(grid).map(|(h, w, c)| h * w * c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Conv heads plus time and farm features; no lags.
    Cnn,
    /// Lag encoder and per-step decoder fused with the conv heads.
    CnnRnn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cnn => "cnn",
            ModelKind::CnnRnn => "cnn-rnn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub gfs_head: CnnHeadConfig,
    pub arp_head: CnnHeadConfig,
    pub encoder_units: Vec<usize>,
    pub dense_units: Vec<usize>,
    pub bn_momentum: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            gfs_head: CnnHeadConfig::default(),
            arp_head: CnnHeadConfig::default(),
            encoder_units: alloc::vec![128, 64],
            dense_units: alloc::vec![128, 64],
            bn_momentum: crate::autodiff::BatchNorm::DEFAULT_MOMENTUM,
        }
    }
}

impl ArchConfig {
    /// Same topology with far fewer units, for quick runs.
    pub fn compact() -> Self {
        let head = CnnHeadConfig { filters: [16, 8], ..CnnHeadConfig::default() };
        ArchConfig {
            gfs_head: head,
            arp_head: head,
            encoder_units: alloc::vec![16, 8],
            dense_units: alloc::vec![32, 16],
            bn_momentum: 0.9,
        }
    }
}

/// Input extents a network is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub lookback: usize,
    pub horizon: usize,
    pub gfs: GridShape,
    pub arp: GridShape,
    pub n_farms: usize,
}

impl NetShape {
    pub fn of(dataset: &WindowedDataset) -> Result<Self> {
        let (gfs, arp) = dataset.grid_shapes().ok_or_else(|| Error::InsufficientData("empty dataset".into()))?;
        Ok(NetShape { lookback: dataset.lookback(), horizon: dataset.horizon(), gfs, arp, n_farms: dataset.n_farms() })
    }
}
