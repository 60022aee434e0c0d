//! Regression trees grown by exact greedy CART on squared error.

use crate::data::Dataset;
use crate::scalar::Real;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode<T: Real> {
    /// Go left iff `x[feature] <= threshold`.
    Split {
        feature: usize,
        threshold: T,
        left: NodeId,
        right: NodeId,
    },
    Leaf {
        leaf_index: u32,
        value: T,
    },
}

/// Binary regression tree stored as a node arena rooted at node 0.
///
/// Leaves are numbered `0..num_leaves` in depth-first, left-before-right
/// order, which is the numbering leaf paths are expressed in.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree<T: Real> {
    nodes: Vec<TreeNode<T>>,
    num_leaves: u32,
}

impl<T: Real> RegressionTree<T> {
    /// Assembles a tree from an arena, renumbering nothing. Returns `None`
    /// unless the arena is a well-formed tree rooted at node 0 whose leaf
    /// indices follow depth-first order.
    pub fn from_nodes(nodes: Vec<TreeNode<T>>) -> Option<Self> {
        if nodes.is_empty() {
            return None;
        }
        let mut seen = vec![false; nodes.len()];
        let mut next_leaf = 0u32;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if id >= nodes.len() || seen[id] {
                return None;
            }
            seen[id] = true;
            match &nodes[id] {
                TreeNode::Split {
                    left,
                    right,
                    threshold,
                    ..
                } => {
                    if !threshold.is_finite() {
                        return None;
                    }
                    stack.push(*right);
                    stack.push(*left);
                }
                TreeNode::Leaf { leaf_index, .. } => {
                    if *leaf_index != next_leaf {
                        return None;
                    }
                    next_leaf += 1;
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return None;
        }
        Some(Self {
            nodes,
            num_leaves: next_leaf,
        })
    }

    /// Single-leaf tree.
    pub fn constant(value: T) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf {
                leaf_index: 0,
                value,
            }],
            num_leaves: 1,
        }
    }

    pub fn nodes(&self) -> &[TreeNode<T>] {
        &self.nodes
    }

    pub fn num_leaves(&self) -> u32 {
        self.num_leaves
    }

    /// `(leaf_index, value)` of the leaf `x` routes to.
    pub fn leaf(&self, x: &[T]) -> (u32, T) {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                TreeNode::Leaf { leaf_index, value } => return (*leaf_index, *value),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn value(&self, x: &[T]) -> T {
        self.leaf(x).1
    }

    pub fn max_depth(&self) -> usize {
        fn go<T: Real>(nodes: &[TreeNode<T>], id: NodeId) -> usize {
            match &nodes[id] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

struct Grower<'a, T: Real> {
    data: &'a Dataset<T>,
    targets: &'a [T],
    params: GrowParams,
    nodes: Vec<TreeNode<T>>,
    next_leaf: u32,
}

struct BestSplit<T> {
    feature: usize,
    threshold: T,
    left_rows: Vec<usize>,
    right_rows: Vec<usize>,
}

/// Fits a tree to `targets[rows]` (targets indexed like `data` rows).
pub(crate) fn grow<T: Real>(
    data: &Dataset<T>,
    targets: &[T],
    rows: &[usize],
    params: GrowParams,
) -> RegressionTree<T> {
    let mut g = Grower {
        data,
        targets,
        params,
        nodes: Vec::new(),
        next_leaf: 0,
    };
    g.build(rows.to_vec(), 0);
    RegressionTree {
        nodes: g.nodes,
        num_leaves: g.next_leaf,
    }
}

impl<T: Real> Grower<'_, T> {
    fn build(&mut self, rows: Vec<usize>, depth: usize) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            leaf_index: 0,
            value: T::zero(),
        });
        match self.best_split(&rows, depth) {
            Some(best) => {
                let left = self.build(best.left_rows, depth + 1);
                let right = self.build(best.right_rows, depth + 1);
                self.nodes[id] = TreeNode::Split {
                    feature: best.feature,
                    threshold: best.threshold,
                    left,
                    right,
                };
            }
            None => {
                let value = if rows.is_empty() {
                    T::zero()
                } else {
                    rows.iter().map(|&i| self.targets[i]).sum::<T>()
                        / T::from_usize_lossy(rows.len())
                };
                self.nodes[id] = TreeNode::Leaf {
                    leaf_index: self.next_leaf,
                    value,
                };
                self.next_leaf += 1;
            }
        }
        id
    }

    // Highest squared-error reduction; ties keep the lowest feature, then the
    // smallest threshold, because candidates are scanned in that order and
    // only a strictly larger gain replaces the incumbent.
    fn best_split(&self, rows: &[usize], depth: usize) -> Option<BestSplit<T>> {
        let n = rows.len();
        let min_leaf = self.params.min_samples_leaf.max(1);
        if depth >= self.params.max_depth || n < 2 * min_leaf {
            return None;
        }
        let first = self.targets[rows[0]];
        if rows.iter().all(|&i| self.targets[i] == first) {
            return None;
        }
        let total: T = rows.iter().map(|&i| self.targets[i]).sum();
        let n_t = T::from_usize_lossy(n);
        let parent = total * total / n_t;

        let mut best: Option<(usize, usize, T, T)> = None; // feature, split pos, threshold, gain
        let mut order = rows.to_vec();
        for feature in 0..self.data.n_features() {
            self.sort_by_feature(&mut order, feature);
            let x = |i: usize| self.data.row(i)[feature];
            let mut left_sum = T::zero();
            for pos in 1..n {
                left_sum += self.targets[order[pos - 1]];
                if pos < min_leaf || n - pos < min_leaf {
                    continue;
                }
                let (lo, hi) = (x(order[pos - 1]), x(order[pos]));
                if lo >= hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / T::from_usize_lossy(pos)
                    + right_sum * right_sum / T::from_usize_lossy(n - pos)
                    - parent;
                if gain > T::zero() && best.is_none_or(|b| gain > b.3) {
                    let mut threshold = (lo + hi) / T::lit(2.0);
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some((feature, pos, threshold, gain));
                }
            }
        }
        let (feature, pos, threshold, _) = best?;
        self.sort_by_feature(&mut order, feature);
        let right_rows = order.split_off(pos);
        Some(BestSplit {
            feature,
            threshold,
            left_rows: order,
            right_rows,
        })
    }

    fn sort_by_feature(&self, order: &mut [usize], feature: usize) {
        let x = |i: usize| self.data.row(i)[feature];
        order.sort_by(|&a, &b| x(a).partial_cmp(&x(b)).unwrap().then(a.cmp(&b)));
    }
}
