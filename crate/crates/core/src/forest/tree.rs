use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::split::{best_split, Embedding, NodeData, SplitRules};
use super::TreeParams;
use crate::rng::StreamRng;

/// A binary tree over covariate space. Units with `x[feature] <= threshold`
/// go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        leaf_id: usize,
    },
}

impl TreeNode {
    /// Leaf reached by covariate vector `x`.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { leaf_id } => return *leaf_id,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Leaf ids must be `0..n_leaves` in depth-first order.
    pub(crate) fn has_canonical_ids(&self) -> bool {
        fn walk(node: &TreeNode, next: &mut usize) -> bool {
            match node {
                TreeNode::Leaf { leaf_id } => {
                    let ok = *leaf_id == *next;
                    *next += 1;
                    ok
                }
                TreeNode::Split { left, right, .. } => walk(left, next) && walk(right, next),
            }
        }
        walk(self, &mut 0)
    }
}

pub(crate) struct Grower<'a> {
    pub data: NodeData<'a>,
    pub embedding: Embedding<'a>,
    pub params: &'a TreeParams,
    pub rng: StreamRng,
    next_leaf: usize,
}

impl<'a> Grower<'a> {
    pub fn new(
        data: NodeData<'a>,
        embedding: Embedding<'a>,
        params: &'a TreeParams,
        rng: StreamRng,
    ) -> Self {
        Self {
            data,
            embedding,
            params,
            rng,
            next_leaf: 0,
        }
    }

    fn leaf(&mut self) -> TreeNode {
        let leaf_id = self.next_leaf;
        self.next_leaf += 1;
        TreeNode::Leaf { leaf_id }
    }

    /// Grows a subtree on `units`, all of which carry positive weight.
    pub fn grow(&mut self, units: Vec<usize>, depth: usize) -> TreeNode {
        let p = self.params;
        if depth >= p.max_depth || units.len() < 2 * p.min_node_size.max(1) {
            return self.leaf();
        }
        let n_features = self.data.x.ncols();
        let mut features =
            index::sample(&mut self.rng, n_features, p.mtry.min(n_features)).into_vec();
        features.sort_unstable();
        let rules = SplitRules {
            min_node_size: p.min_node_size,
            max_weight_ratio: p.max_weight_ratio,
            threshold_grid: p.threshold_grid,
        };
        let Some(best) = best_split(&self.data, &units, &features, &self.embedding, &rules) else {
            return self.leaf();
        };
        if best.score <= p.min_gain {
            return self.leaf();
        }
        let (left, right): (Vec<usize>, Vec<usize>) = units
            .into_iter()
            .partition(|&i| self.data.x[[i, best.feature]] <= best.threshold);
        let left = self.grow(left, depth + 1);
        let right = self.grow(right, depth + 1);
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}
