//! Per-instance interpretable surrogates fitted on (mask, black-box response)
//! pairs, and the attributions read off them.

mod attribution;
mod boost;
mod forest;
mod linalg;
mod linear;
mod perturb;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::PerturbationMask;

pub use attribution::{
    exact_shapley, extract_attributions, shapley_values, AttributionMap, MAX_SHAPLEY_PLAYERS,
};
pub use boost::BoostedTrees;
pub use forest::RandomForest;
pub use linear::{fit_elastic_net, fit_ols, fit_ridge, ElasticNetFit, LinearModel, OLS_JITTER};
pub use perturb::{
    generate_perturbation_set, label_perturbations, sample_masks, MaskScorer, PerturbationRecord,
};
pub use tree::{Node, RegressionTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SurrogateKind {
    Lr,
    Ridge,
    ElasticNet,
    Dt,
    Rf,
    Xgb,
}

impl SurrogateKind {
    pub const ALL: [SurrogateKind; 6] = [
        SurrogateKind::Lr,
        SurrogateKind::Ridge,
        SurrogateKind::ElasticNet,
        SurrogateKind::Dt,
        SurrogateKind::Rf,
        SurrogateKind::Xgb,
    ];

    pub fn is_linear(self) -> bool {
        matches!(self, SurrogateKind::Lr | SurrogateKind::Ridge | SurrogateKind::ElasticNet)
    }
}

impl fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SurrogateKind::Lr => "LR",
            SurrogateKind::Ridge => "Ridge",
            SurrogateKind::ElasticNet => "ElasticNet",
            SurrogateKind::Dt => "DT",
            SurrogateKind::Rf => "RF",
            SurrogateKind::Xgb => "XGB",
        })
    }
}

impl FromStr for SurrogateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['_', '-'], "");
        SurrogateKind::ALL
            .into_iter()
            .find(|k| k.to_string().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::invalid(format!("unknown surrogate kind `{}`", s.trim())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateHyper {
    pub ridge_lambda: f64,
    pub enet_lambda: f64,
    pub enet_rho: f64,
    pub enet_tol: f64,
    pub enet_max_sweeps: usize,
    pub dt_max_depth: usize,
    pub dt_min_leaf: usize,
    pub rf_trees: usize,
    pub rf_max_depth: usize,
    pub rf_min_leaf: usize,
    pub xgb_rounds: usize,
    pub xgb_max_depth: usize,
    pub xgb_learning_rate: f64,
    pub xgb_lambda: f64,
}

impl Default for SurrogateHyper {
    fn default() -> Self {
        SurrogateHyper {
            ridge_lambda: 1.0,
            enet_lambda: 0.01,
            enet_rho: 0.5,
            enet_tol: 1e-8,
            enet_max_sweeps: 10_000,
            dt_max_depth: 6,
            dt_min_leaf: 2,
            rf_trees: 100,
            rf_max_depth: 6,
            rf_min_leaf: 1,
            xgb_rounds: 100,
            xgb_max_depth: 3,
            xgb_learning_rate: 0.1,
            xgb_lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedModel {
    Linear(LinearModel),
    Tree(RegressionTree),
    Forest(RandomForest),
    Boosted(BoostedTrees),
}

/// A fitted interpretable model `G` over superpoint masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub kind: SurrogateKind,
    pub features: usize,
    pub model: FittedModel,
}

impl SurrogateModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match &self.model {
            FittedModel::Linear(m) => m.predict(x),
            FittedModel::Tree(t) => t.predict(x),
            FittedModel::Forest(f) => f.predict(x),
            FittedModel::Boosted(b) => b.predict(x),
        }
    }

    pub fn predict_mask(&self, mask: &PerturbationMask) -> f64 {
        self.predict(&mask.as_f64())
    }

    /// Coefficients of linear kinds.
    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.model {
            FittedModel::Linear(m) => Some(&m.coef),
            _ => None,
        }
    }
}

/// Fits `G` of the given kind to the records, unweighted.
pub fn fit_surrogate(
    records: &[PerturbationRecord],
    kind: SurrogateKind,
    hyper: &SurrogateHyper,
    seed: u64,
) -> Result<SurrogateModel> {
    if records.len() < 2 {
        return Err(Error::invalid("need at least two perturbation records"));
    }
    let features = records[0].mask.len();
    if records.iter().any(|r| r.mask.len() != features) {
        return Err(Error::invalid("records have masks of different lengths"));
    }
    if records.iter().all(|r| r.mask == records[0].mask) {
        return Err(Error::DegenerateDesign("all perturbation masks are identical".into()));
    }
    let x: Vec<Vec<f64>> = records.iter().map(|r| r.mask.as_f64()).collect();
    let y: Vec<f64> = records.iter().map(|r| r.response).collect();
    fit_design(&x, &y, kind, hyper, seed)
}

/// Fits `G` on an explicit binary design matrix.
pub fn fit_design(
    x: &[Vec<f64>],
    y: &[f64],
    kind: SurrogateKind,
    hyper: &SurrogateHyper,
    seed: u64,
) -> Result<SurrogateModel> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { expected: x.len(), got: y.len() });
    }
    if x.is_empty() {
        return Err(Error::invalid("empty design"));
    }
    let features = x[0].len();
    let model = match kind {
        SurrogateKind::Lr => FittedModel::Linear(fit_ols(x, y)?),
        SurrogateKind::Ridge => FittedModel::Linear(fit_ridge(x, y, hyper.ridge_lambda)?),
        SurrogateKind::ElasticNet => FittedModel::Linear(
            fit_elastic_net(x, y, hyper.enet_lambda, hyper.enet_rho, hyper.enet_tol, hyper.enet_max_sweeps)?
                .model,
        ),
        SurrogateKind::Dt => FittedModel::Tree(tree::grow(
            x,
            y,
            (0..x.len()).collect(),
            &tree::GrowParams {
                max_depth: Some(hyper.dt_max_depth),
                min_leaf: hyper.dt_min_leaf,
                l2: 0.0,
                max_features: None,
            },
            None,
        )),
        SurrogateKind::Rf => FittedModel::Forest(forest::fit_forest(
            x,
            y,
            hyper.rf_trees,
            Some(hyper.rf_max_depth),
            hyper.rf_min_leaf,
            seed,
        )),
        SurrogateKind::Xgb => FittedModel::Boosted(boost::fit_boosted(
            x,
            y,
            hyper.xgb_rounds,
            hyper.xgb_max_depth,
            hyper.xgb_learning_rate,
            hyper.xgb_lambda,
        )),
    };
    Ok(SurrogateModel { kind, features, model })
}

/// Coefficient of determination of `model` on `(x, y)`.
pub fn r_squared(model: &SurrogateModel, x: &[Vec<f64>], y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(r, v)| {
            let e = v - model.predict(r);
            e * e
        })
        .sum();
    if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}
