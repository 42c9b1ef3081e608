use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{EtParams, GbmParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult<P> {
    pub best_index: usize,
    pub best: P,
    /// Every candidate with its validation score, in evaluation order.
    pub table: Vec<(P, f64)>,
}

/// Score every candidate and keep the lowest score (first wins ties).
/// Non-finite scores never win.
pub fn grid_search<P: Clone>(candidates: &[P], mut score: impl FnMut(&P) -> Result<f64>) -> Result<GridResult<P>> {
    if candidates.is_empty() {
        return Err(Error::Config("empty parameter grid".into()));
    }
    let mut table = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let s = score(c)?;
        if s.is_finite() && best.is_none_or(|(_, b)| s < b) {
            best = Some((i, s));
        }
        table.push((c.clone(), s));
    }
    let (best_index, _) = best.ok_or_else(|| Error::NonFinite("no candidate produced a finite score".into()))?;
    Ok(GridResult { best_index, best: candidates[best_index].clone(), table })
}

/// Cartesian search space for boosting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbmGrid {
    pub n_estimators: Vec<usize>,
    pub num_leaves: Vec<usize>,
    pub max_depth: Vec<Option<usize>>,
    pub min_child_samples: Vec<usize>,
    pub learning_rate: Vec<f64>,
}

impl Default for GbmGrid {
    fn default() -> Self {
        GbmGrid {
            n_estimators: alloc::vec![80, 100, 120, 140],
            num_leaves: alloc::vec![30, 60, 90, 120],
            max_depth: alloc::vec![Some(50), Some(100), Some(500), None],
            min_child_samples: (10..=50).collect(),
            learning_rate: alloc::vec![0.07],
        }
    }
}

impl GbmGrid {
    pub fn expand(&self) -> Vec<GbmParams> {
        let mut out = Vec::new();
        for &n_estimators in &self.n_estimators {
            for &num_leaves in &self.num_leaves {
                for &max_depth in &self.max_depth {
                    for &min_child_samples in &self.min_child_samples {
                        for &learning_rate in &self.learning_rate {
                            out.push(GbmParams { n_estimators, learning_rate, num_leaves, min_child_samples, max_depth });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Cartesian search space for extra-trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EtGrid {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<Option<usize>>,
    pub max_features: Vec<Option<usize>>,
}

impl Default for EtGrid {
    fn default() -> Self {
        EtGrid {
            n_trees: alloc::vec![80, 100, 120, 140],
            max_depth: alloc::vec![Some(50), Some(100), Some(500), None],
            max_features: alloc::vec![None],
        }
    }
}

impl EtGrid {
    pub fn expand(&self) -> Vec<EtParams> {
        let mut out = Vec::new();
        for &n_trees in &self.n_trees {
            for &max_depth in &self.max_depth {
                for &max_features in &self.max_features {
                    out.push(EtParams { n_trees, max_features, max_depth, ..EtParams::default() });
                }
            }
        }
        out
    }
}
