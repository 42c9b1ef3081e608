use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::tree::{mean, Node, RegressionTree};
use super::Regressor;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbmParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub num_leaves: usize,
    pub min_child_samples: usize,
    /// `None` is unbounded.
    pub max_depth: Option<usize>,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams { n_estimators: 100, learning_rate: 0.07, num_leaves: 90, min_child_samples: 22, max_depth: None }
    }
}

/// `predict(x) = base_score + learning_rate * sum_i trees[i](x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub params: GbmParams,
    pub base_score: f64,
    pub trees: Vec<RegressionTree>,
}

impl Regressor for GbmModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(x)).sum();
        self.base_score + self.params.learning_rate * sum
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Leaf {
    lo: usize,
    hi: usize,
    depth: usize,
    node: usize,
    best: Option<Candidate>,
}

/// Column-major copy of the features plus, per feature, the row indices
/// sorted by value (stable, so ties keep row order).
struct Presorted {
    n: usize,
    columns: Vec<f64>,
    order: Vec<u32>,
    features: Vec<usize>,
}

impl Presorted {
    fn new(x: &Matrix) -> Self {
        let (n, f) = (x.rows(), x.cols());
        let mut columns = vec![0.0; n * f];
        for i in 0..n {
            for (j, &v) in x.row(i).iter().enumerate() {
                columns[j * n + i] = v;
            }
        }
        let mut order = Vec::with_capacity(n * f);
        let mut features = Vec::new();
        for j in 0..f {
            let col = &columns[j * n..(j + 1) * n];
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            if n > 0 && col[idx[0] as usize] != col[idx[n - 1] as usize] {
                features.push(j);
            }
            order.extend(idx);
        }
        Presorted { n, columns, order, features }
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.columns[j * self.n..(j + 1) * self.n]
    }
}

struct TreeBuilder<'a> {
    data: &'a Presorted,
    work: Vec<u32>,
    scratch: Vec<u32>,
    goes_left: Vec<bool>,
    params: &'a GbmParams,
}

impl TreeBuilder<'_> {
    fn segment(&self, j: usize, lo: usize, hi: usize) -> &[u32] {
        let n = self.data.n;
        &self.work[j * n + lo..j * n + hi]
    }

    /// Best variance-reduction split of the rows in `[lo, hi)`. Ties keep the
    /// lowest feature, then the lowest threshold. Gains within rounding of
    /// each other count as ties, so two features that cut the same rows
    /// resolve the same way whatever the row order.
    fn best_split(&self, lo: usize, hi: usize, depth: usize, r: &[f64]) -> Option<Candidate> {
        let n = hi - lo;
        let m = self.params.min_child_samples.max(1);
        if n < 2 * m || self.params.max_depth.is_some_and(|d| depth >= d) {
            return None;
        }
        let rows = self.segment(0, lo, hi);
        let total: f64 = rows.iter().map(|&i| r[i as usize]).sum();
        let mu = total / n as f64;
        let sse: f64 = rows.iter().map(|&i| (r[i as usize] - mu) * (r[i as usize] - mu)).sum();
        if sse <= 0.0 {
            return None;
        }
        let parent = total * total / n as f64;
        let min_gain = 1e-12 * sse;
        let tie = 1e-9 * (sse + parent.abs());
        let mut best: Option<Candidate> = None;
        for &j in &self.data.features {
            let col = self.data.col(j);
            let seg = self.segment(j, lo, hi);
            let mut sl = 0.0;
            for k in 0..n - 1 {
                sl += r[seg[k] as usize];
                let nl = k + 1;
                if nl < m {
                    continue;
                }
                if n - nl < m {
                    break;
                }
                let (a, b) = (col[seg[k] as usize], col[seg[k + 1] as usize]);
                if a == b {
                    continue;
                }
                let sr = total - sl;
                let gain = sl * sl / nl as f64 + sr * sr / (n - nl) as f64 - parent;
                if gain > min_gain && best.is_none_or(|c| gain > c.gain + tie) {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some(Candidate { gain, feature: j, threshold });
                }
            }
        }
        best
    }

    /// Stable partition of every feature's segment by the chosen split.
    fn partition(&mut self, lo: usize, hi: usize, c: Candidate) -> usize {
        let n = self.data.n;
        let col = self.data.col(c.feature);
        for &i in &self.work[lo..hi] {
            self.goes_left[i as usize] = col[i as usize] <= c.threshold;
        }
        let mut n_left = 0;
        for j in 0..self.data.columns.len() / n.max(1) {
            let seg = &mut self.work[j * n + lo..j * n + hi];
            self.scratch.clear();
            let mut w = 0;
            for k in 0..seg.len() {
                let row = seg[k];
                if self.goes_left[row as usize] {
                    seg[w] = row;
                    w += 1;
                } else {
                    self.scratch.push(row);
                }
            }
            seg[w..].copy_from_slice(&self.scratch);
            n_left = w;
        }
        lo + n_left
    }

    fn grow(&mut self, r: &[f64]) -> (RegressionTree, Vec<(usize, usize, usize)>) {
        let n = self.data.n;
        self.work.clear();
        self.work.extend_from_slice(&self.data.order);
        let mut nodes = vec![Node::Leaf { value: 0.0, samples: n }];
        let best = self.best_split(0, n, 0, r);
        let mut leaves = vec![Leaf { lo: 0, hi: n, depth: 0, node: 0, best }];
        while leaves.len() < self.params.num_leaves.max(1) {
            let mut pick: Option<(usize, f64)> = None;
            for (k, l) in leaves.iter().enumerate() {
                if let Some(c) = l.best {
                    if pick.is_none_or(|(_, g)| c.gain > g) {
                        pick = Some((k, c.gain));
                    }
                }
            }
            let Some((k, _)) = pick else { break };
            let leaf = leaves.remove(k);
            let c = leaf.best.expect("picked leaves have a split");
            let mid = self.partition(leaf.lo, leaf.hi, c);
            let (left, right) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::Leaf { value: 0.0, samples: mid - leaf.lo });
            nodes.push(Node::Leaf { value: 0.0, samples: leaf.hi - mid });
            nodes[leaf.node] = Node::Split { feature: c.feature, threshold: c.threshold, left, right };
            let d = leaf.depth + 1;
            let lb = self.best_split(leaf.lo, mid, d, r);
            let rb = self.best_split(mid, leaf.hi, d, r);
            // children take the parent's place so gain ties resolve left to right
            leaves.insert(k, Leaf { lo: mid, hi: leaf.hi, depth: d, node: right, best: rb });
            leaves.insert(k, Leaf { lo: leaf.lo, hi: mid, depth: d, node: left, best: lb });
        }
        let mut spans = Vec::with_capacity(leaves.len());
        for l in &leaves {
            let value = mean(self.segment(0, l.lo, l.hi).iter().map(|&i| r[i as usize]));
            nodes[l.node] = Node::Leaf { value, samples: l.hi - l.lo };
            spans.push((l.node, l.lo, l.hi));
        }
        (RegressionTree { nodes }, spans)
    }
}

/// Stagewise least-squares boosting with leaf-wise trees grown by exact
/// split search over sorted feature values.
pub fn fit_gbm(x: &Matrix, y: &[f64], params: &GbmParams) -> Result<GbmModel> {
    let n = x.rows();
    if y.len() != n {
        return Err(Error::shape("fit_gbm", format!("{n} rows, {} targets", y.len())));
    }
    if n == 0 || n < 2 * params.min_child_samples {
        return Err(Error::InsufficientData(format!(
            "{n} rows, boosting needs at least {}",
            (2 * params.min_child_samples).max(1)
        )));
    }
    if !(params.learning_rate >= 0.0) || !params.learning_rate.is_finite() {
        return Err(Error::param("learning_rate", format!("{}", params.learning_rate)));
    }
    let base_score = mean(y.iter().copied());
    let data = Presorted::new(x);
    let mut builder = TreeBuilder {
        data: &data,
        work: Vec::with_capacity(data.order.len()),
        scratch: Vec::new(),
        goes_left: vec![false; n],
        params,
    };
    let mut pred = vec![base_score; n];
    let mut residual = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_estimators);
    for _ in 0..params.n_estimators {
        for i in 0..n {
            residual[i] = y[i] - pred[i];
        }
        let (tree, spans) = builder.grow(&residual);
        for (node, lo, hi) in spans {
            let Node::Leaf { value, .. } = tree.nodes[node] else { unreachable!() };
            for &i in builder.segment(0, lo, hi) {
                pred[i as usize] += params.learning_rate * value;
            }
        }
        trees.push(tree);
    }
    Ok(GbmModel { params: *params, base_score, trees })
}
