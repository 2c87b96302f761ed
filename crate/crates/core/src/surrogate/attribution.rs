use serde::{Deserialize, Serialize};

use super::{SurrogateKind, SurrogateModel};
use crate::error::{Error, Result};
use crate::pointcloud::{Strategy, Superpoint};
use crate::surrogate::PerturbationRecord;

/// Coalition enumeration is exponential; this caps it at about a million
/// evaluations.
pub const MAX_SHAPLEY_PLAYERS: usize = 20;

/// Signed per-superpoint attributions for one explained instance. Positive
/// weights push the diagnosis toward PD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    pub instance_id: String,
    pub strategy: Strategy,
    pub kind: SurrogateKind,
    pub weights: Vec<f64>,
    /// Half-open point ranges `[lo, hi)` of the superpoints.
    pub superpoint_ranges: Vec<(usize, usize)>,
}

impl AttributionMap {
    pub fn new(
        instance_id: impl Into<String>,
        strategy: Strategy,
        kind: SurrogateKind,
        weights: Vec<f64>,
        superpoints: &[Superpoint],
    ) -> Result<Self> {
        if weights.len() != superpoints.len() {
            return Err(Error::LengthMismatch { expected: superpoints.len(), got: weights.len() });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("non-finite attribution".into()));
        }
        Ok(AttributionMap {
            instance_id: instance_id.into(),
            strategy,
            kind,
            weights,
            superpoint_ranges: superpoints.iter().map(|s| (s.lo, s.hi)).collect(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Weight of the superpoint containing each point.
    pub fn per_point(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (&(lo, hi), &w) in self.superpoint_ranges.iter().zip(&self.weights) {
            out.extend(std::iter::repeat_n(w, hi - lo));
        }
        out
    }
}

/// Mean marginal toggle: for each superpoint `j`, the average over the record
/// masks of `G(mask with j kept) - G(mask with j perturbed)`. For a linear
/// `G` this is exactly the coefficient of `j`.
pub fn extract_attributions(
    surrogate: &SurrogateModel,
    superpoints: usize,
    records: &[PerturbationRecord],
) -> Result<Vec<f64>> {
    if superpoints != surrogate.features {
        return Err(Error::LengthMismatch { expected: surrogate.features, got: superpoints });
    }
    if records.is_empty() {
        return Err(Error::invalid("no records to toggle"));
    }
    let mut sums = vec![0.0; superpoints];
    for r in records {
        let mut x = r.mask.as_f64();
        if x.len() != superpoints {
            return Err(Error::LengthMismatch { expected: superpoints, got: x.len() });
        }
        for j in 0..superpoints {
            let saved = x[j];
            x[j] = 1.0;
            let on = surrogate.predict(&x);
            x[j] = 0.0;
            let off = surrogate.predict(&x);
            x[j] = saved;
            sums[j] += on - off;
        }
    }
    let k = records.len() as f64;
    Ok(sums.into_iter().map(|s| s / k).collect())
}

/// Exact Shapley values of the game `v(S) = G(mask with exactly S kept)`.
pub fn exact_shapley(surrogate: &SurrogateModel, superpoints: usize) -> Result<Vec<f64>> {
    shapley_values(superpoints, |x| surrogate.predict(x))
}

/// Exact Shapley values by enumerating all `2^players` coalitions of the
/// game `value`, which receives the 0/1 membership vector of a coalition.
pub fn shapley_values<F: Fn(&[f64]) -> f64>(players: usize, value: F) -> Result<Vec<f64>> {
    if players == 0 || players > MAX_SHAPLEY_PLAYERS {
        return Err(Error::invalid(format!(
            "exact Shapley supports 1..={MAX_SHAPLEY_PLAYERS} players, got {players}"
        )));
    }
    let coalitions = 1usize << players;
    let mut x = vec![0.0; players];
    let values: Vec<f64> = (0..coalitions)
        .map(|code| {
            for (j, v) in x.iter_mut().enumerate() {
                *v = f64::from(u8::from(code >> j & 1 == 1));
            }
            value(&x)
        })
        .collect();

    // weight(s) = s! (n - s - 1)! / n! = 1 / (n * C(n - 1, s))
    let n = players;
    let mut weights = vec![0.0; n];
    let mut binom = 1.0f64;
    for (s, w) in weights.iter_mut().enumerate() {
        *w = 1.0 / (n as f64 * binom);
        binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
    }

    let mut phi = vec![0.0; n];
    for (j, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << j;
        let mut acc = 0.0;
        for code in 0..coalitions {
            if code & bit == 0 {
                let size = code.count_ones() as usize;
                acc += weights[size] * (values[code | bit] - values[code]);
            }
        }
        *p = acc;
    }
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::PerturbationMask;
    use crate::surrogate::{FittedModel, LinearModel, Node, RegressionTree};

    fn linear(coef: Vec<f64>) -> SurrogateModel {
        SurrogateModel {
            kind: SurrogateKind::Lr,
            features: coef.len(),
            model: FittedModel::Linear(LinearModel { coef, intercept: 0.1 }),
        }
    }

    fn records(m: usize) -> Vec<PerturbationRecord> {
        (0..(1u64 << m) - 1)
            .map(|c| PerturbationRecord { mask: PerturbationMask::from_code(c, m), response: 0.0 })
            .collect()
    }

    #[test]
    fn linear_toggle_equals_coefficients() {
        let g = linear(vec![0.3, -0.2]);
        let w = extract_attributions(&g, 2, &records(2)).unwrap();
        assert!((w[0] - 0.3).abs() < 1e-15 && (w[1] + 0.2).abs() < 1e-15);
        let phi = exact_shapley(&g, 2).unwrap();
        assert!((phi[0] - 0.3).abs() < 1e-15 && (phi[1] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn constant_surrogate_has_no_attribution() {
        let g = linear(vec![0.0; 4]);
        assert!(extract_attributions(&g, 4, &records(4)).unwrap().iter().all(|&w| w == 0.0));
        assert!(exact_shapley(&g, 4).unwrap().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn single_split_tree() {
        let tree = RegressionTree {
            nodes: vec![
                Node::Split { feature: 2, left: 1, right: 2 },
                Node::Leaf { value: 0.2 },
                Node::Leaf { value: 0.8 },
            ],
        };
        let g = SurrogateModel { kind: SurrogateKind::Dt, features: 4, model: FittedModel::Tree(tree) };
        let w = extract_attributions(&g, 4, &records(4)).unwrap();
        assert!((w[2] - 0.6).abs() < 1e-15);
        assert!(w.iter().enumerate().all(|(j, &v)| j == 2 || v == 0.0));
    }

    #[test]
    fn shapley_rejects_too_many_players() {
        assert!(shapley_values(21, |_| 0.0).is_err());
        assert!(shapley_values(0, |_| 0.0).is_err());
    }

    #[test]
    fn per_point_expansion() {
        let sps = crate::pointcloud::superpoint_ranges(5, 2).unwrap();
        let map = AttributionMap::new("a", Strategy::Centroid, SurrogateKind::Lr, vec![1.0, -1.0], &sps).unwrap();
        assert_eq!(map.per_point(), vec![1.0, 1.0, 1.0, -1.0, -1.0]);
        assert_eq!(AttributionMap::from_json(&map.to_json().unwrap()).unwrap(), map);
    }
}
