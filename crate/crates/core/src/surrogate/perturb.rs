use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{vote, Diagnoser, EncodedPatch};
use crate::error::{Error, Result};
use crate::par;
use crate::pointcloud::{
    patch_offsets, AttributedPoint, PerturbationMask, PointCloud, Strategy, Superpoint,
};

/// One training row for a surrogate: which superpoints were kept, and the
/// black-box output on the resulting cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub mask: PerturbationMask,
    pub response: f64,
}

/// `count` masks with i.i.d. fair bits, redrawing any all-ones mask (the
/// unperturbed instance is never part of the set). Each mask depends only on
/// its position in the stream, so shorter runs are prefixes of longer ones.
pub fn sample_masks(superpoints: usize, count: usize, seed: u64) -> Result<Vec<PerturbationMask>> {
    if superpoints == 0 {
        return Err(Error::invalid("need at least one superpoint"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masks = Vec::with_capacity(count);
    while masks.len() < count {
        let mask = PerturbationMask((0..superpoints).map(|_| rng.random::<bool>()).collect());
        if !mask.is_all_ones() {
            masks.push(mask);
        }
    }
    Ok(masks)
}

/// Samples masks and materializes each perturbed cloud.
pub fn generate_perturbation_set(
    cloud: &PointCloud,
    superpoints: &[Superpoint],
    count: usize,
    strategy: Strategy,
    seed: u64,
) -> Result<Vec<(PerturbationMask, PointCloud)>> {
    if count == 0 {
        return Err(Error::invalid("perturbation count must be at least 1"));
    }
    sample_masks(superpoints.len(), count, seed)?
        .into_iter()
        .map(|m| {
            let c = strategy.apply(cloud, superpoints, &m)?;
            Ok((m, c))
        })
        .collect()
}

/// Scores every materialized perturbed cloud with the black box.
pub fn label_perturbations(
    black_box: &Diagnoser<'_>,
    set: &[(PerturbationMask, PointCloud)],
) -> Result<Vec<PerturbationRecord>> {
    par::map(set, |(mask, cloud)| {
        Ok(PerturbationRecord { mask: mask.clone(), response: black_box.score(cloud)? })
    })
    .into_iter()
    .collect()
}

/// Scores masks of one instance without materializing perturbed clouds.
///
/// A patch only changes when a superpoint it overlaps is perturbed, so each
/// distinct (patch, overlapping bits) state is run through the network once
/// per call. Results equal scoring the materialized clouds exactly.
pub struct MaskScorer<'a> {
    black_box: Diagnoser<'a>,
    cloud: &'a PointCloud,
    strategy: Strategy,
    superpoints: usize,
    offsets: Vec<usize>,
    overlaps: Vec<Vec<usize>>,
    ranges: Vec<(usize, usize)>,
    perturbed: Vec<Vec<AttributedPoint>>,
}

impl<'a> MaskScorer<'a> {
    pub fn new(
        black_box: Diagnoser<'a>,
        cloud: &'a PointCloud,
        superpoints: &[Superpoint],
        strategy: Strategy,
    ) -> Result<Self> {
        let offsets = patch_offsets(cloud.len(), black_box.window, black_box.step)?;
        let w = black_box.window;
        let overlaps = offsets
            .iter()
            .map(|&start| {
                superpoints
                    .iter()
                    .filter(|sp| sp.lo < start + w && sp.hi > start)
                    .map(|sp| sp.index)
                    .collect()
            })
            .collect();
        let perturbed = superpoints
            .iter()
            .map(|sp| {
                let mut pts = cloud.points[sp.range()].to_vec();
                strategy.perturb_slice(&mut pts);
                pts
            })
            .collect();
        Ok(MaskScorer {
            black_box,
            cloud,
            strategy,
            superpoints: superpoints.len(),
            offsets,
            overlaps,
            ranges: superpoints.iter().map(|s| (s.lo, s.hi)).collect(),
            perturbed,
        })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn patch_count(&self) -> usize {
        self.offsets.len()
    }

    fn patch_points(&self, patch: usize, bits: &[bool]) -> Vec<AttributedPoint> {
        let start = self.offsets[patch];
        let end = start + self.black_box.window;
        let mut pts = self.cloud.points[start..end].to_vec();
        for (&j, &keep) in self.overlaps[patch].iter().zip(bits) {
            if keep {
                continue;
            }
            let (lo, hi) = self.ranges[j];
            let (a, b) = (lo.max(start), hi.min(end));
            if a < b {
                pts[a - start..b - start].copy_from_slice(&self.perturbed[j][a - lo..b - lo]);
            }
        }
        pts
    }

    /// `F` of the cloud perturbed by each mask.
    pub fn score(&self, masks: &[PerturbationMask]) -> Result<Vec<f64>> {
        for m in masks {
            if m.len() != self.superpoints {
                return Err(Error::LengthMismatch { expected: self.superpoints, got: m.len() });
            }
        }
        let mut index: HashMap<(usize, Vec<bool>), usize> = HashMap::new();
        let mut states: Vec<(usize, Vec<bool>)> = Vec::new();
        let mut lookup: Vec<Vec<usize>> = Vec::with_capacity(masks.len());
        for m in masks {
            let row = (0..self.offsets.len())
                .map(|p| {
                    let bits: Vec<bool> = self.overlaps[p].iter().map(|&j| m.bits()[j]).collect();
                    let key = (p, bits);
                    *index.entry(key.clone()).or_insert_with(|| {
                        states.push(key);
                        states.len() - 1
                    })
                })
                .collect();
            lookup.push(row);
        }

        let chunks: Vec<&[(usize, Vec<bool>)]> = states.chunks(32).collect();
        let probs: Vec<f64> = par::map(&chunks, |chunk| {
            let patches: Vec<EncodedPatch> = chunk
                .iter()
                .map(|(p, bits)| EncodedPatch::from_points(&self.patch_points(*p, bits)))
                .collect();
            self.black_box.model.predict(&patches)
        })
        .into_iter()
        .collect::<Result<Vec<Vec<f64>>>>()?
        .concat();

        Ok(lookup
            .iter()
            .map(|row| {
                let p: Vec<f64> = row.iter().map(|&s| probs[s]).collect();
                vote(&p, self.black_box.alpha)
            })
            .collect())
    }

    /// `F` of the unperturbed cloud.
    pub fn score_original(&self) -> Result<f64> {
        Ok(self.score(&[PerturbationMask::all_ones(self.superpoints)])?[0])
    }

    /// Scores masks and pairs them into surrogate training records.
    pub fn records(&self, masks: &[PerturbationMask]) -> Result<Vec<PerturbationRecord>> {
        Ok(masks
            .iter()
            .cloned()
            .zip(self.score(masks)?)
            .map(|(mask, response)| PerturbationRecord { mask, response })
            .collect())
    }
}
