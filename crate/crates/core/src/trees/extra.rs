use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{mean, Node, RegressionTree};
use super::Regressor;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EtParams {
    pub n_trees: usize,
    /// Candidate features per split; `None` is `sqrt(F)` (at least 1).
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
}

impl Default for EtParams {
    fn default() -> Self {
        EtParams { n_trees: 120, max_features: None, min_samples_split: 2, max_depth: None }
    }
}

/// Extremely randomized trees; the prediction is the mean over trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtModel {
    pub params: EtParams,
    pub seed: u64,
    pub tree_seeds: Vec<u64>,
    pub trees: Vec<RegressionTree>,
}

impl Regressor for EtModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        mean(self.trees.iter().map(|t| t.predict_row(x)))
    }
}

fn grow_tree(x: &Matrix, y: &[f64], params: &EtParams, k: usize, seed: u64) -> RegressionTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_feat = x.cols();
    let mut features: Vec<usize> = (0..n_feat).collect();
    let mut idx: Vec<usize> = (0..y.len()).collect();
    let mut nodes = vec![Node::Leaf { value: 0.0, samples: 0 }];
    // (arena slot, lo, hi, depth)
    let mut stack = vec![(0usize, 0usize, y.len(), 0usize)];
    while let Some((slot, lo, hi, depth)) = stack.pop() {
        let rows = &idx[lo..hi];
        let n = rows.len();
        let value = mean(rows.iter().map(|&i| y[i]));
        nodes[slot] = Node::Leaf { value, samples: n };
        let pure = rows.iter().all(|&i| y[i] == y[rows[0]]);
        if pure || n < params.min_samples_split.max(2) || params.max_depth.is_some_and(|d| depth >= d) {
            continue;
        }
        let total: f64 = rows.iter().map(|&i| y[i]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut tried = 0;
        // lazy Fisher-Yates over features until k non-constant ones are drawn
        for j in 0..n_feat {
            let r = rng.random_range(j..n_feat);
            features.swap(j, r);
            let f = features[j];
            let (mut lo_v, mut hi_v) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in rows {
                let v = x.get(i, f);
                lo_v = lo_v.min(v);
                hi_v = hi_v.max(v);
            }
            if lo_v >= hi_v {
                continue;
            }
            let mut t = lo_v + (hi_v - lo_v) * rng.random::<f64>();
            if t >= hi_v {
                t = lo_v;
            }
            let (mut sl, mut nl) = (0.0, 0usize);
            for &i in rows {
                if x.get(i, f) <= t {
                    sl += y[i];
                    nl += 1;
                }
            }
            let sr = total - sl;
            let gain = sl * sl / nl as f64 + sr * sr / (n - nl) as f64 - parent;
            if best.is_none_or(|b| gain > b.0) {
                best = Some((gain, f, t));
            }
            tried += 1;
            if tried == k {
                break;
            }
        }
        let Some((_, feature, threshold)) = best else { continue };
        let seg = &mut idx[lo..hi];
        let mut w = 0;
        for r in 0..seg.len() {
            if x.get(seg[r], feature) <= threshold {
                seg.swap(w, r);
                w += 1;
            }
        }
        let (left, right) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf { value: 0.0, samples: 0 });
        nodes.push(Node::Leaf { value: 0.0, samples: 0 });
        nodes[slot] = Node::Split { feature, threshold, left, right };
        stack.push((right, lo + w, hi, depth + 1));
        stack.push((left, lo, lo + w, depth + 1));
    }
    RegressionTree { nodes }
}

/// Fit `params.n_trees` trees on the full sample. Tree `i` uses the `i`-th
/// seed drawn from a generator seeded with `seed`.
pub fn fit_extra_trees(x: &Matrix, y: &[f64], params: &EtParams, seed: u64) -> Result<EtModel> {
    if y.len() != x.rows() {
        return Err(Error::shape("fit_extra_trees", format!("{} rows, {} targets", x.rows(), y.len())));
    }
    if y.len() < 2 {
        return Err(Error::InsufficientData(format!("{} rows, extra-trees needs at least 2", y.len())));
    }
    if params.n_trees == 0 || x.cols() == 0 {
        return Err(Error::param("n_trees", "need at least one tree and one feature"));
    }
    let k = params
        .max_features
        .unwrap_or_else(|| (libm::sqrt(x.cols() as f64) as usize).max(1))
        .clamp(1, x.cols());
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let tree_seeds: Vec<u64> = (0..params.n_trees).map(|_| master.random()).collect();
    #[cfg(feature = "parallel")]
    let trees = {
        use rayon::prelude::*;
        tree_seeds.par_iter().map(|&s| grow_tree(x, y, params, k, s)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let trees = tree_seeds.iter().map(|&s| grow_tree(x, y, params, k, s)).collect();
    Ok(EtModel { params: *params, seed, tree_seeds, trees })
}
