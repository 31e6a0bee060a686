//! Regression trees grown by exact greedy split search on per-row gradient
//! statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    /// Rows with `x[split_feature] < threshold` go left.
    Split {
        split_feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        default_direction: Direction,
        gain: f64,
        cover: f64,
    },
    Leaf { weight: f64, cover: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn single_leaf(weight: f64) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf { weight, cover: 0.0 }],
        }
    }

    /// Index of the leaf `row` falls into.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    split_feature,
                    threshold,
                    left,
                    right,
                    default_direction,
                    ..
                } => {
                    let x = row[*split_feature];
                    i = if x.is_nan() {
                        match default_direction {
                            Direction::Left => *left,
                            Direction::Right => *right,
                        }
                    } else if x < *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Raw (unshrunk) leaf weight for `row`.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { weight, .. } => weight,
            Node::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    /// Structural checks: child indices valid, every node reachable exactly
    /// once from the root, finite leaf weights.
    pub fn check_structure(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() {
                return Err(format!("child index {i} out of range"));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(format!("node {i} reached twice"));
            }
            match &self.nodes[i] {
                Node::Leaf { weight, .. } if !weight.is_finite() => {
                    return Err(format!("leaf {i} has non-finite weight"))
                }
                Node::Leaf { .. } => {}
                Node::Split { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(format!("node {i} is unreachable"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
}

/// Optimal leaf weight `-G / (H + lambda)`.
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    -g / (h + lambda)
}

/// Reduction of the penalized second-order objective from splitting a node
/// with sums `(G, H)` into `(G_L, H_L)` and `(G_R, H_R)`, minus `gamma`.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)) - gamma
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
    pub left_grad: f64,
    pub left_hess: f64,
}

/// Column-sorted row indices, shared by all trees of one training run.
pub struct SortedColumns {
    /// `order[j]` lists row indices sorted by feature `j` (stable on ties).
    order: Vec<Vec<u32>>,
}

impl SortedColumns {
    pub fn new(x: &Matrix) -> Self {
        let order = (0..x.n_cols())
            .into_par_iter()
            .map(|j| {
                let mut idx: Vec<u32> = (0..x.n_rows() as u32).collect();
                idx.sort_by(|&a, &b| x.get(a as usize, j).total_cmp(&x.get(b as usize, j)));
                idx
            })
            .collect();
        SortedColumns { order }
    }
}

/// Best split of one feature over rows given in ascending feature order.
/// Later candidates must be strictly better, so the lowest threshold wins
/// ties.
pub fn best_split_for_feature(
    x: &Matrix,
    feature: usize,
    sorted_rows: &[u32],
    grad: &[f64],
    hess: &[f64],
    total: (f64, f64),
    params: &TreeParams,
) -> Option<SplitCandidate> {
    let (g_tot, h_tot) = total;
    let mut best: Option<SplitCandidate> = None;
    let (mut gl, mut hl) = (0.0, 0.0);
    for w in sorted_rows.windows(2) {
        let (a, b) = (w[0] as usize, w[1] as usize);
        gl += grad[a];
        hl += hess[a];
        let (xa, xb) = (x.get(a, feature), x.get(b, feature));
        if xa == xb {
            continue;
        }
        let (gr, hr) = (g_tot - gl, h_tot - hl);
        if hl < params.min_child_weight || hr < params.min_child_weight {
            continue;
        }
        let gain = split_gain(gl, hl, gr, hr, params.lambda, params.gamma);
        if best.is_none_or(|bst| gain > bst.gain) {
            let mut threshold = 0.5 * (xa + xb);
            if threshold <= xa {
                threshold = xb;
            }
            best = Some(SplitCandidate {
                feature,
                threshold,
                gain,
                left_grad: gl,
                left_hess: hl,
            });
        }
    }
    best
}

struct PendingNode {
    id: usize,
    depth: usize,
    /// Per-feature row lists, each in ascending feature order.
    rows: Vec<Vec<u32>>,
    grad: f64,
    hess: f64,
}

/// Grow one tree on `(grad, hess)`.
pub fn grow_tree(
    x: &Matrix,
    sorted: &SortedColumns,
    grad: &[f64],
    hess: &[f64],
    params: &TreeParams,
) -> RegressionTree {
    let root_rows = &sorted.order[0];
    let (g, h) = root_rows.iter().fold((0.0, 0.0), |(g, h), &i| {
        (g + grad[i as usize], h + hess[i as usize])
    });
    let mut nodes = vec![Node::Leaf {
        weight: leaf_weight(g, h, params.lambda),
        cover: h,
    }];
    let mut stack = vec![PendingNode {
        id: 0,
        depth: 0,
        rows: sorted.order.clone(),
        grad: g,
        hess: h,
    }];
    let mut in_left = vec![false; x.n_rows()];

    while let Some(node) = stack.pop() {
        if node.depth >= params.max_depth || node.rows[0].len() < 2 {
            continue;
        }
        let candidates: Vec<Option<SplitCandidate>> = (0..x.n_cols())
            .into_par_iter()
            .map(|j| {
                best_split_for_feature(x, j, &node.rows[j], grad, hess, (node.grad, node.hess), params)
            })
            .collect();
        // Lowest feature index wins ties.
        let best = candidates
            .into_iter()
            .flatten()
            .fold(None, |acc: Option<SplitCandidate>, c| match acc {
                Some(a) if c.gain <= a.gain => Some(a),
                _ => Some(c),
            });
        let Some(best) = best.filter(|b| b.gain > 0.0) else {
            continue;
        };

        for &i in &node.rows[best.feature] {
            in_left[i as usize] = x.get(i as usize, best.feature) < best.threshold;
        }
        let (left_rows, right_rows): (Vec<Vec<u32>>, Vec<Vec<u32>>) = node
            .rows
            .iter()
            .map(|col| col.iter().partition(|&&i| in_left[i as usize]))
            .unzip();

        let (gl, hl) = (best.left_grad, best.left_hess);
        let (gr, hr) = (node.grad - gl, node.hess - hl);
        let left_id = nodes.len();
        let right_id = left_id + 1;
        nodes.push(Node::Leaf {
            weight: leaf_weight(gl, hl, params.lambda),
            cover: hl,
        });
        nodes.push(Node::Leaf {
            weight: leaf_weight(gr, hr, params.lambda),
            cover: hr,
        });
        nodes[node.id] = Node::Split {
            split_feature: best.feature,
            threshold: best.threshold,
            left: left_id,
            right: right_id,
            default_direction: Direction::Left,
            gain: best.gain,
            cover: node.hess,
        };
        stack.push(PendingNode {
            id: right_id,
            depth: node.depth + 1,
            rows: right_rows,
            grad: gr,
            hess: hr,
        });
        stack.push(PendingNode {
            id: left_id,
            depth: node.depth + 1,
            rows: left_rows,
            grad: gl,
            hess: hl,
        });
    }
    RegressionTree { nodes }
}
