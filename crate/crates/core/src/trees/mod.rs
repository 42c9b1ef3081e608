//! Tabular baselines: least squares, extra-trees and leaf-wise gradient
//! boosting, the direct multi-step wrapper and grid search.

mod extra;
mod gbm;
mod grid;
mod linear;
mod multistep;
mod tree;

pub use extra::{fit_extra_trees, EtModel, EtParams};
pub use gbm::{fit_gbm, GbmModel, GbmParams};
pub use grid::{grid_search, EtGrid, GbmGrid, GridResult};
pub use linear::{fit_linear, LinearModel};
pub use multistep::{fit_direct_multistep, fit_model, DirectMultiStep, Model, ModelSpec};
pub use tree::{Node, RegressionTree};

use alloc::vec::Vec;

use crate::Matrix;

/// Anything that maps a feature row to a scalar.
pub trait Regressor {
    fn predict_row(&self, x: &[f64]) -> f64;

    fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}
