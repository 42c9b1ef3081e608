use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Regressor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go to `left`.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64, samples: usize },
}

/// Binary regression tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TreeColumns", try_from = "TreeColumns")]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

/// Serialized form: one array per field. A leaf has feature -1, its value
/// in `value` and its sample count in `left`.
#[derive(Serialize, Deserialize)]
struct TreeColumns {
    feature: Vec<i64>,
    value: Vec<f64>,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl From<RegressionTree> for TreeColumns {
    fn from(t: RegressionTree) -> Self {
        let n = t.nodes.len();
        let mut c = TreeColumns { feature: Vec::with_capacity(n), value: Vec::with_capacity(n), left: Vec::with_capacity(n), right: Vec::with_capacity(n) };
        for node in t.nodes {
            let (f, v, l, r) = match node {
                Node::Split { feature, threshold, left, right } => (feature as i64, threshold, left, right),
                Node::Leaf { value, samples } => (-1, value, samples, 0),
            };
            c.feature.push(f);
            c.value.push(v);
            c.left.push(l);
            c.right.push(r);
        }
        c
    }
}

impl TryFrom<TreeColumns> for RegressionTree {
    type Error = alloc::string::String;

    fn try_from(c: TreeColumns) -> core::result::Result<Self, Self::Error> {
        let n = c.feature.len();
        if n == 0 || c.value.len() != n || c.left.len() != n || c.right.len() != n {
            return Err("tree columns are empty or differ in length".into());
        }
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let node = match c.feature[i] {
                -1 => Node::Leaf { value: c.value[i], samples: c.left[i] },
                f if f >= 0 => {
                    let (left, right) = (c.left[i], c.right[i]);
                    // children come after their parent, so walks terminate
                    if left <= i || right <= i || left >= n || right >= n {
                        return Err(alloc::format!("node {i} has children {left} and {right} of {n}"));
                    }
                    Node::Split { feature: f as usize, threshold: c.value[i], left, right }
                }
                f => return Err(alloc::format!("node {i} has feature {f}")),
            };
            nodes.push(node);
        }
        Ok(RegressionTree { nodes })
    }
}

impl RegressionTree {
    pub fn leaf(value: f64, samples: usize) -> Self {
        RegressionTree { nodes: alloc::vec![Node::Leaf { value, samples }] }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { value, samples } => Some((value, samples)),
            Node::Split { .. } => None,
        })
    }

    /// `(feature, threshold)` of every split in arena order.
    pub fn splits(&self) -> Vec<(usize, f64)> {
        self.nodes
            .iter()
            .filter_map(|n| match *n {
                Node::Split { feature, threshold, .. } => Some((feature, threshold)),
                Node::Leaf { .. } => None,
            })
            .collect()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

impl Regressor for RegressionTree {
    fn predict_row(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }
}

/// Arithmetic mean in index order.
pub(crate) fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    if n == 0 { 0.0 } else { s / n as f64 }
}
