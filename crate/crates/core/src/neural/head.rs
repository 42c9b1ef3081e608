use alloc::format;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CnnHeadConfig;
use crate::autodiff::{BatchNorm, Conv2d, Graph, Mode, ParamStore, Var};
use crate::data::GridShape;
use crate::{Error, Result};

/// Conv stack applied to `[rows, h, w, c]` grids, one row per (sample,
/// step), so all horizon steps share one set of weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CnnHead {
    pub config: CnnHeadConfig,
    pub grid: GridShape,
    pub conv1: Conv2d,
    pub bn1: BatchNorm,
    pub conv2: Conv2d,
    pub bn2: BatchNorm,
    pub output_width: usize,
}

impl CnnHead {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        config: CnnHeadConfig,
        grid: GridShape,
        bn_momentum: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let output_width = config
            .output_width(grid)
            .ok_or_else(|| Error::Config(format!("{name}: grid {grid:?} too small for the conv stack")))?;
        let [f1, f2] = config.filters;
        let conv1 = Conv2d::new(store, &format!("{name}.conv1"), grid.channels, f1, config.kernels[0], config.strides[0], config.padding, rng);
        let mut bn1 = BatchNorm::new(store, &format!("{name}.bn1"), f1, rng);
        let conv2 = Conv2d::new(store, &format!("{name}.conv2"), f1, f2, config.kernels[1], config.strides[1], config.padding, rng);
        let mut bn2 = BatchNorm::new(store, &format!("{name}.bn2"), f2, rng);
        bn1.momentum = bn_momentum;
        bn2.momentum = bn_momentum;
        Ok(CnnHead { config, grid, conv1, bn1, conv2, bn2, output_width })
    }

    /// `[rows, h, w, c]` to `[rows, output_width]`.
    pub fn forward<R: Rng + ?Sized>(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode, rng: &mut R) -> Result<Var> {
        let rows = g.shape(x)[0];
        let h = self.conv1.forward(g, store, x)?;
        let h = self.bn1.forward(g, store, h, mode)?;
        let h = g.relu(h)?;
        let h = self.conv2.forward(g, store, h)?;
        let h = self.bn2.forward(g, store, h, mode)?;
        let h = g.relu(h)?;
        let h = g.maxpool2d(h, self.config.pool, self.config.pool_stride)?;
        let h = g.dropout(h, self.config.dropout, mode, rng)?;
        g.reshape(h, &[rows, self.output_width])
    }
}
