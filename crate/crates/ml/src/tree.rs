//! CART regression tree with exhaustive variance-reduction splits.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::preprocess::{check_finite, check_width, check_xy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    /// `ceil(log2(p))` features per split.
    Log2,
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, p: usize) -> usize {
        let m = match self {
            MaxFeatures::All => p,
            MaxFeatures::Log2 => (p as f64).log2().ceil() as usize,
            MaxFeatures::Sqrt => (p as f64).sqrt().ceil() as usize,
            MaxFeatures::Count(m) => m,
        };
        m.clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafSize {
    Count(usize),
    /// Fraction of the training rows, rounded up.
    Fraction(f64),
}

impl LeafSize {
    pub fn resolve(self, n: usize) -> Result<usize> {
        match self {
            LeafSize::Count(0) => Err(MlError::Config("min_samples_leaf must be at least 1".into())),
            LeafSize::Count(c) => Ok(c),
            LeafSize::Fraction(f) if f > 0.0 && f < 1.0 => Ok(((f * n as f64).ceil() as usize).max(1)),
            LeafSize::Fraction(f) => Err(MlError::Config(format!("min_samples_leaf fraction {f} not in (0, 1)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: LeafSize,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_leaf: LeafSize::Count(1),
            max_features: MaxFeatures::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        n_samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        value: f64,
        n_samples: usize,
        /// Drop in summed squared error from this split.
        gain: f64,
    },
}

/// Binary regression tree; rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TreeFile")]
pub struct RegressionTree {
    pub n_features: usize,
    pub nodes: Vec<Node>,
    #[serde(skip)]
    flat: Vec<FlatNode>,
}

#[derive(Deserialize)]
struct TreeFile {
    n_features: usize,
    nodes: Vec<Node>,
}

impl From<TreeFile> for RegressionTree {
    fn from(f: TreeFile) -> Self {
        RegressionTree::new(f.n_features, f.nodes)
    }
}

/// Prediction-only node, a third the size of [`Node`]. Leaves carry
/// `feature == LEAF` and their value in `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct FlatNode {
    threshold: f64,
    feature: u32,
    left: u32,
    right: u32,
}

const LEAF: u32 = u32::MAX;

/// Column-major copy of the training features.
pub(crate) struct Columns {
    cols: Vec<Vec<f64>>,
}

impl Columns {
    pub(crate) fn new(x: ArrayView2<f64>) -> Self {
        Columns {
            cols: x.columns().into_iter().map(|c| c.to_vec()).collect(),
        }
    }

    fn n_features(&self) -> usize {
        self.cols.len()
    }
}

struct Best {
    feature: usize,
    threshold: f64,
    split_at: usize,
    score: f64,
    order: Vec<usize>,
}

impl RegressionTree {
    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, params: &TreeParams, rng: &mut ChaCha8Rng) -> Result<Self> {
        check_xy(x, y)?;
        let min_leaf = params.min_samples_leaf.resolve(x.nrows())?;
        let y = y.to_vec();
        Ok(Self::fit_rows(&Columns::new(x), &y, (0..x.nrows()).collect(), params, min_leaf, rng))
    }

    /// Grows a tree on `rows` (may repeat, as in a bootstrap sample).
    pub(crate) fn fit_rows(
        cols: &Columns,
        y: &[f64],
        rows: Vec<usize>,
        params: &TreeParams,
        min_leaf: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let p = cols.n_features();
        let m = params.max_features.resolve(p);
        let mut nodes = Vec::new();
        let mut stack = vec![(0usize, rows, 0usize)];
        nodes.push(Node::Leaf {
            value: 0.0,
            n_samples: 0,
        });
        while let Some((id, rows, depth)) = stack.pop() {
            let n = rows.len();
            let sum: f64 = rows.iter().map(|&r| y[r]).sum();
            let value = sum / n as f64;
            let can_split = params.max_depth.is_none_or(|d| depth < d)
                && n >= 2 * min_leaf
                && rows.iter().any(|&r| y[r] != y[rows[0]]);
            let best = if can_split { best_split(cols, y, &rows, min_leaf, m, rng) } else { None };
            match best {
                Some(best) if best.score - sum * sum / n as f64 > 0.0 => {
                    let left_rows = best.order[..best.split_at].to_vec();
                    let right_rows = best.order[best.split_at..].to_vec();
                    let (left, right) = (nodes.len(), nodes.len() + 1);
                    for _ in 0..2 {
                        nodes.push(Node::Leaf {
                            value: 0.0,
                            n_samples: 0,
                        });
                    }
                    nodes[id] = Node::Split {
                        feature: best.feature,
                        threshold: best.threshold,
                        left,
                        right,
                        value,
                        n_samples: n,
                        gain: best.score - sum * sum / n as f64,
                    };
                    stack.push((right, right_rows, depth + 1));
                    stack.push((left, left_rows, depth + 1));
                }
                _ => nodes[id] = Node::Leaf { value, n_samples: n },
            }
        }
        RegressionTree::new(p, nodes)
    }

    fn new(n_features: usize, nodes: Vec<Node>) -> Self {
        let flat = nodes
            .iter()
            .map(|n| match *n {
                Node::Leaf { value, .. } => FlatNode {
                    threshold: value,
                    feature: LEAF,
                    left: 0,
                    right: 0,
                },
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => FlatNode {
                    threshold,
                    feature: feature as u32,
                    left: left as u32,
                    right: right as u32,
                },
            })
            .collect();
        RegressionTree { n_features, nodes, flat }
    }

    #[inline]
    fn walk(&self, value: impl Fn(usize) -> f64) -> f64 {
        let mut id = 0;
        loop {
            let n = self.flat[id];
            if n.feature == LEAF {
                return n.threshold;
            }
            id = if value(n.feature as usize) <= n.threshold { n.left } else { n.right } as usize;
        }
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        self.walk(|j| row[j])
    }

    /// Adds this tree's prediction for each row of `x` to `out`.
    pub fn accumulate(&self, x: ArrayView2<f64>, out: &mut Array1<f64>) {
        match x.as_slice().filter(|_| self.n_features > 0) {
            Some(data) => {
                for (o, row) in out.iter_mut().zip(data.chunks_exact(self.n_features)) {
                    *o += self.walk(|j| row[j]);
                }
            }
            None => {
                for (o, row) in out.iter_mut().zip(x.outer_iter()) {
                    *o += self.predict_row(row);
                }
            }
        }
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_width(x, self.n_features)?;
        check_finite(x)?;
        Ok(x.outer_iter().map(|r| self.predict_row(r)).collect())
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Total squared-error reduction credited to each feature.
    pub fn feature_gains(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.n_features];
        for node in &self.nodes {
            if let Node::Split { feature, gain, .. } = node {
                g[*feature] += gain;
            }
        }
        g
    }
}

/// Best split over a random feature subset of size `m`, widening to the
/// remaining features only if the subset admits no valid split. The score
/// is `S_l^2 / n_l + S_r^2 / n_r`; larger is better.
fn best_split(
    cols: &Columns,
    y: &[f64],
    rows: &[usize],
    min_leaf: usize,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Best> {
    let p = cols.n_features();
    let (mut first, mut rest): (Vec<usize>, Vec<usize>) = if m < p {
        let mut all: Vec<usize> = (0..p).collect();
        all.shuffle(rng);
        (all[..m].to_vec(), all[m..].to_vec())
    } else {
        ((0..p).collect(), vec![])
    };
    first.sort_unstable();
    rest.sort_unstable();
    let mut best: Option<Best> = None;
    for group in [first, rest] {
        for f in group {
            let col = &cols.cols[f];
            let mut order = rows.to_vec();
            order.sort_unstable_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            let n = order.len();
            let total: f64 = order.iter().map(|&r| y[r]).sum();
            let mut left = 0.0;
            let mut found: Option<(usize, f64)> = None;
            for i in 1..n {
                left += y[order[i - 1]];
                if i < min_leaf || n - i < min_leaf || col[order[i - 1]] == col[order[i]] {
                    continue;
                }
                let right = total - left;
                let score = left * left / i as f64 + right * right / (n - i) as f64;
                if found.is_none_or(|(_, s)| score > s) {
                    found = Some((i, score));
                }
            }
            if let Some((i, score)) = found {
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let (lo, hi) = (col[order[i - 1]], col[order[i]]);
                    let mid = 0.5 * (lo + hi);
                    best = Some(Best {
                        feature: f,
                        threshold: if mid < hi { mid } else { lo },
                        split_at: i,
                        score,
                        order,
                    });
                }
            }
        }
        if best.is_some() {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn constant_target_is_one_leaf() {
        let x = array![[1.0], [2.0], [3.0]];
        let t = RegressionTree::fit(x.view(), array![4.0, 4.0, 4.0].view(), &TreeParams::default(), &mut rng()).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict(array![[10.0]].view()).unwrap(), array![4.0]);
    }

    #[test]
    fn step_is_split_in_the_gap() {
        let x = array![[-3.0], [-2.0], [-1.0], [0.0], [1.0], [2.0]];
        let y = array![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let params = TreeParams {
            max_depth: Some(1),
            ..TreeParams::default()
        };
        let t = RegressionTree::fit(x.view(), y.view(), &params, &mut rng()).unwrap();
        match &t.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, -0.5),
            other => panic!("{other:?}"),
        }
        assert_eq!(t.predict(x.view()).unwrap(), y);
    }

    #[test]
    fn large_leaf_floor_blocks_splits() {
        let x = array![[0.0], [1.0], [2.0], [3.0], [4.0]];
        let params = TreeParams {
            min_samples_leaf: LeafSize::Fraction(0.6),
            ..TreeParams::default()
        };
        let t = RegressionTree::fit(x.view(), array![0.0, 1.0, 2.0, 3.0, 4.0].view(), &params, &mut rng()).unwrap();
        assert_eq!(t.nodes.len(), 1);
    }

    #[test]
    fn ties_go_to_the_lowest_feature() {
        // Both columns separate the target equally well.
        let x = array![[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]];
        let params = TreeParams {
            max_depth: Some(1),
            ..TreeParams::default()
        };
        let t = RegressionTree::fit(x.view(), array![0.0, 0.0, 1.0, 1.0].view(), &params, &mut rng()).unwrap();
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn resolves_hyperparameters() {
        assert_eq!(MaxFeatures::Log2.resolve(6), 3);
        assert_eq!(MaxFeatures::Log2.resolve(1), 1);
        assert_eq!(MaxFeatures::Count(10).resolve(6), 6);
        assert_eq!(LeafSize::Fraction(0.01).resolve(3472).unwrap(), 35);
        assert!(LeafSize::Fraction(1.5).resolve(10).is_err());
        assert!(LeafSize::Count(0).resolve(10).is_err());
    }

    #[test]
    fn respects_depth_limit() {
        let x: ndarray::Array2<f64> = ndarray::Array2::from_shape_fn((64, 1), |(i, _)| i as f64);
        let y = x.column(0).mapv(|v| (v * 0.37).sin());
        let params = TreeParams {
            max_depth: Some(3),
            ..TreeParams::default()
        };
        let t = RegressionTree::fit(x.view(), y.view(), &params, &mut rng()).unwrap();
        assert_eq!(t.depth(), 3);
        assert_eq!(t.n_leaves(), 8);
    }
}
