use serde::{Deserialize, Serialize};

use super::model::{EncodedPatch, PointSetModel};
use crate::error::{Error, Result};
use crate::pointcloud::{segment_patches, PointCloud};
use crate::signal::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisResult {
    pub patch_probs: Vec<f64>,
    /// Fraction of patches voting PD.
    pub y_final: f64,
    pub label: Label,
    pub alpha: f64,
}

/// Fraction of probabilities at or above `alpha`.
pub fn vote(probs: &[f64], alpha: f64) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    probs.iter().filter(|&&p| p >= alpha).count() as f64 / probs.len() as f64
}

/// PD when at least half of the patches vote PD.
pub fn decide(y_final: f64) -> Label {
    if y_final >= 0.5 {
        Label::Pd
    } else {
        Label::Hc
    }
}

/// Normalized, encoded sliding-window patches of a cloud.
pub fn encode_patches(cloud: &PointCloud, window: usize, step: usize) -> Result<Vec<EncodedPatch>> {
    Ok(segment_patches(cloud, window, step)?
        .iter()
        .map(|p| EncodedPatch::from_points(p.points))
        .collect())
}

pub fn diagnose(
    model: &PointSetModel,
    cloud: &PointCloud,
    window: usize,
    step: usize,
    alpha: f64,
) -> Result<DiagnosisResult> {
    Diagnoser::new(model, window, step, alpha)?.diagnose(cloud)
}

/// The whole-cloud black box: patching, per-patch inference and voting.
#[derive(Debug, Clone, Copy)]
pub struct Diagnoser<'m> {
    pub model: &'m PointSetModel,
    pub window: usize,
    pub step: usize,
    pub alpha: f64,
}

impl<'m> Diagnoser<'m> {
    pub fn new(model: &'m PointSetModel, window: usize, step: usize, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("threshold {alpha} outside [0, 1]")));
        }
        Ok(Diagnoser { model, window, step, alpha })
    }

    pub fn diagnose(&self, cloud: &PointCloud) -> Result<DiagnosisResult> {
        let patches = encode_patches(cloud, self.window, self.step)?;
        let patch_probs = self.model.predict(&patches)?;
        let y_final = vote(&patch_probs, self.alpha);
        Ok(DiagnosisResult { patch_probs, y_final, label: decide(y_final), alpha: self.alpha })
    }

    /// `F(X; alpha)`.
    pub fn score(&self, cloud: &PointCloud) -> Result<f64> {
        Ok(self.diagnose(cloud)?.y_final)
    }
}
