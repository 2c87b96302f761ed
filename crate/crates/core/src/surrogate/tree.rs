//! Regression trees over binary (0/1) features. A split on feature `j` sends
//! `x[j] <= 0.5` left and the rest right.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn constant(value: f64) -> Self {
        RegressionTree { nodes: vec![Node::Leaf { value }] }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split { feature, left, right } => {
                    at = if x[feature] <= 0.5 { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// L2 penalty on leaf values; 0 gives plain means and variance reduction.
    pub l2: f64,
    /// Features examined per split; more are tried only when none of these
    /// admits a valid split.
    pub max_features: Option<usize>,
}

struct Pending {
    node: usize,
    rows: Vec<usize>,
    depth: usize,
}

/// Grows a tree on `rows` of `x`, fitting `targets`. Splits maximize
/// `S_L^2/(n_L+l2) + S_R^2/(n_R+l2) - S^2/(n+l2)`, where `S` sums the targets.
pub(crate) fn grow(
    x: &[Vec<f64>],
    targets: &[f64],
    rows: Vec<usize>,
    params: &GrowParams,
    mut rng: Option<&mut ChaCha8Rng>,
) -> RegressionTree {
    let p = x.first().map_or(0, Vec::len);
    let leaf_value = |rows: &[usize]| {
        let s: f64 = rows.iter().map(|&i| targets[i]).sum();
        s / (rows.len() as f64 + params.l2)
    };
    let mut nodes = vec![Node::Leaf { value: leaf_value(&rows) }];
    let mut stack = vec![Pending { node: 0, rows, depth: 0 }];
    let mut features: Vec<usize> = (0..p).collect();

    while let Some(Pending { node, rows, depth }) = stack.pop() {
        if params.max_depth.is_some_and(|d| depth >= d) || rows.len() < 2 * params.min_leaf {
            continue;
        }
        let n = rows.len() as f64;
        let total: f64 = rows.iter().map(|&i| targets[i]).sum();
        let scale: f64 = rows.iter().map(|&i| targets[i] * targets[i]).sum();
        let parent = total * total / (n + params.l2);

        let budget = match (params.max_features, rng.as_deref_mut()) {
            (Some(m), Some(r)) => {
                features.shuffle(r);
                m.min(p)
            }
            _ => p,
        };
        let mut best: Option<(f64, usize)> = None;
        for (k, &j) in features.iter().enumerate() {
            if k >= budget && best.is_some() {
                break;
            }
            let (mut n_right, mut s_right) = (0usize, 0.0f64);
            for &i in &rows {
                if x[i][j] > 0.5 {
                    n_right += 1;
                    s_right += targets[i];
                }
            }
            let n_left = rows.len() - n_right;
            if n_left < params.min_leaf || n_right < params.min_leaf {
                continue;
            }
            let s_left = total - s_right;
            let gain = s_left * s_left / (n_left as f64 + params.l2)
                + s_right * s_right / (n_right as f64 + params.l2)
                - parent;
            if gain > 1e-12 * scale && best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, j));
            }
        }
        let Some((_, feature)) = best else { continue };

        let (right_rows, left_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| x[i][feature] > 0.5);
        let left = nodes.len();
        nodes.push(Node::Leaf { value: leaf_value(&left_rows) });
        let right = nodes.len();
        nodes.push(Node::Leaf { value: leaf_value(&right_rows) });
        nodes[node] = Node::Split { feature, left, right };
        stack.push(Pending { node: right, rows: right_rows, depth: depth + 1 });
        stack.push(Pending { node: left, rows: left_rows, depth: depth + 1 });
    }
    RegressionTree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(depth: usize) -> GrowParams {
        GrowParams { max_depth: Some(depth), min_leaf: 1, l2: 0.0, max_features: None }
    }

    #[test]
    fn single_split_on_informative_bit() {
        let x: Vec<Vec<f64>> = (0..8u32)
            .map(|c| (0..3).map(|j| f64::from(c >> j & 1)).collect())
            .collect();
        let y: Vec<f64> = x.iter().map(|r| if r[2] > 0.5 { 0.8 } else { 0.2 }).collect();
        let t = grow(&x, &y, (0..8).collect(), &params(4), None);
        assert_eq!(t.depth(), 1);
        assert!(matches!(t.nodes[0], Node::Split { feature: 2, .. }));
        assert!((t.predict(&[0.0, 0.0, 1.0]) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn constant_target_is_a_leaf() {
        let x = vec![vec![0.0], vec![1.0], vec![1.0]];
        let t = grow(&x, &[0.3, 0.3, 0.3], vec![0, 1, 2], &params(3), None);
        assert_eq!(t.nodes.len(), 1);
    }

    #[test]
    fn min_leaf_and_l2() {
        let x = vec![vec![0.0], vec![1.0], vec![1.0]];
        let p = GrowParams { min_leaf: 2, ..params(3) };
        assert_eq!(grow(&x, &[0.0, 1.0, 1.0], vec![0, 1, 2], &p, None).nodes.len(), 1);
        let p = GrowParams { l2: 1.0, ..params(0) };
        let t = grow(&x, &[0.0, 1.0, 1.0], vec![0, 1, 2], &p, None);
        assert_eq!(t.predict(&[0.0]), 2.0 / 4.0);
    }
}
