use serde::{Deserialize, Serialize};

use super::tree::{grow, GrowParams, RegressionTree};

/// Gradient-boosted trees for squared loss. Each round fits the residuals
/// with second-order leaf weights `-G / (H + lambda)` (here `H` is the row
/// count, since the loss Hessian is 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
}

impl BoostedTrees {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

pub(crate) fn fit_boosted(
    x: &[Vec<f64>],
    y: &[f64],
    rounds: usize,
    max_depth: usize,
    learning_rate: f64,
    l2: f64,
) -> BoostedTrees {
    let n = x.len();
    let base = y.iter().sum::<f64>() / n as f64;
    let params = GrowParams { max_depth: Some(max_depth), min_leaf: 1, l2, max_features: None };
    let mut pred = vec![base; n];
    let mut trees = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let residual: Vec<f64> = y.iter().zip(&pred).map(|(t, p)| t - p).collect();
        let tree = grow(x, &residual, (0..n).collect(), &params, None);
        for (p, row) in pred.iter_mut().zip(x) {
            *p += learning_rate * tree.predict(row);
        }
        trees.push(tree);
    }
    BoostedTrees { base, learning_rate, trees }
}
