//! Explaining one diagnosis: label random superpoint masks with the black
//! box, fit a surrogate, read off attributions and score their faithfulness.

use serde::{Deserialize, Serialize};

use crate::classifier::Diagnoser;
use crate::error::Result;
use crate::fidelity::{decision_deltas, InstanceFidelity};
use crate::pointcloud::{segment_superpoints, PerturbationMask, PointCloud, Strategy, Superpoint};
use crate::surrogate::{
    extract_attributions, fit_surrogate, sample_masks, AttributionMap, MaskScorer, PerturbationRecord,
    SurrogateHyper, SurrogateKind, SurrogateModel,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainSettings {
    pub superpoints: usize,
    pub perturbations: usize,
    pub mask_seed: u64,
    pub surrogate_seed: u64,
    pub hyper: SurrogateHyper,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        ExplainSettings {
            superpoints: 11,
            perturbations: 200,
            mask_seed: 0,
            surrogate_seed: 0,
            hyper: SurrogateHyper::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub map: AttributionMap,
    pub surrogate: SurrogateModel,
    pub fidelity: InstanceFidelity,
}

/// Perturbation data for one instance and strategy, shared by every
/// surrogate kind fitted to it.
pub struct InstanceExplainer<'a> {
    instance_id: String,
    strategy: Strategy,
    superpoints: Vec<Superpoint>,
    scorer: MaskScorer<'a>,
    records: Vec<PerturbationRecord>,
    deltas: Vec<f64>,
    original: f64,
}

impl<'a> InstanceExplainer<'a> {
    pub fn new(
        black_box: Diagnoser<'a>,
        cloud: &'a PointCloud,
        instance_id: impl Into<String>,
        strategy: Strategy,
        settings: &ExplainSettings,
    ) -> Result<Self> {
        let superpoints = segment_superpoints(cloud, settings.superpoints)?;
        let scorer = MaskScorer::new(black_box, cloud, &superpoints, strategy)?;
        let masks = sample_masks(superpoints.len(), settings.perturbations, settings.mask_seed)?;
        let records = scorer.records(&masks)?;
        let deltas = decision_deltas(&scorer, superpoints.len())?;
        let original = scorer.score_original()?;
        Ok(InstanceExplainer {
            instance_id: instance_id.into(),
            strategy,
            superpoints,
            scorer,
            records,
            deltas,
            original,
        })
    }

    pub fn records(&self) -> &[PerturbationRecord] {
        &self.records
    }

    pub fn superpoints(&self) -> &[Superpoint] {
        &self.superpoints
    }

    /// `F(X) - F(X \ S_j)` for each superpoint.
    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    /// Black-box output on the unperturbed cloud.
    pub fn original(&self) -> f64 {
        self.original
    }

    pub fn scorer(&self) -> &MaskScorer<'a> {
        &self.scorer
    }

    /// Fits a surrogate on the first `count` records.
    pub fn explain_prefix(
        &self,
        kind: SurrogateKind,
        count: usize,
        settings: &ExplainSettings,
    ) -> Result<Explanation> {
        let records = &self.records[..count.min(self.records.len())];
        let m = self.superpoints.len();
        let surrogate = fit_surrogate(records, kind, &settings.hyper, settings.surrogate_seed)?;
        let weights = extract_attributions(&surrogate, m, records)?;
        let g_out = surrogate.predict_mask(&PerturbationMask::all_ones(m));
        let fidelity = InstanceFidelity::evaluate(
            self.instance_id.clone(),
            kind,
            self.strategy,
            self.original,
            g_out,
            &weights,
            &self.deltas,
        )?;
        let map = AttributionMap::new(self.instance_id.clone(), self.strategy, kind, weights, &self.superpoints)?;
        Ok(Explanation { map, surrogate, fidelity })
    }

    pub fn explain(&self, kind: SurrogateKind, settings: &ExplainSettings) -> Result<Explanation> {
        self.explain_prefix(kind, self.records.len(), settings)
    }
}
