use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, GrowParams, RegressionTree};
use crate::par;

/// Bagged regression trees; prediction is the mean over trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<RegressionTree>,
}

impl RandomForest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

pub(crate) fn fit_forest(
    x: &[Vec<f64>],
    y: &[f64],
    n_trees: usize,
    max_depth: Option<usize>,
    min_leaf: usize,
    seed: u64,
) -> RandomForest {
    let n = x.len();
    let p = x.first().map_or(0, Vec::len);
    let params = GrowParams {
        max_depth,
        min_leaf,
        l2: 0.0,
        max_features: Some((p as f64).sqrt().ceil() as usize),
    };
    // One independent stream per tree keeps the forest identical whether
    // trees are grown in parallel or not.
    let trees = par::map_range(n_trees, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64 + 1);
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        grow(x, y, rows, &params, Some(&mut rng))
    });
    RandomForest { trees }
}
