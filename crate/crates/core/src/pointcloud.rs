//! Point-cloud view of a drawing: building clouds from signals, sliding-window
//! patches, contiguous superpoints, and the two superpoint perturbations.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::HandDrawnSignal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributedPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub color: Option<[f64; 3]>,
}

impl AttributedPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        AttributedPoint { x, y, z, color: None }
    }

    /// Number of model input channels this point carries (3 or 6).
    pub fn channels(&self) -> usize {
        if self.color.is_some() {
            6
        } else {
            3
        }
    }

    pub fn extend_features(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&[self.x, self.y, self.z]);
        if let Some(c) = self.color {
            out.extend_from_slice(&c);
        }
    }
}

/// Signal feature used as the height attribute `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HeightFeature {
    Azimuth,
    Altitude,
    Pressure,
    Radius,
    Velocity,
    Acceleration,
    /// Constant height `z = 1`.
    None,
}

impl HeightFeature {
    pub const ALL: [HeightFeature; 7] = [
        HeightFeature::Azimuth,
        HeightFeature::Altitude,
        HeightFeature::Pressure,
        HeightFeature::Radius,
        HeightFeature::Velocity,
        HeightFeature::Acceleration,
        HeightFeature::None,
    ];

    fn value(self, signal: &HandDrawnSignal, i: usize) -> f64 {
        let s = &signal.samples[i];
        match self {
            HeightFeature::Azimuth => s.azimuth,
            HeightFeature::Altitude => s.altitude,
            HeightFeature::Pressure => s.pressure,
            HeightFeature::Radius => signal.radius[i],
            HeightFeature::Velocity => signal.velocity[i],
            HeightFeature::Acceleration => signal.acceleration[i],
            HeightFeature::None => 1.0,
        }
    }
}

impl fmt::Display for HeightFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeightFeature::Azimuth => "azimuth",
            HeightFeature::Altitude => "altitude",
            HeightFeature::Pressure => "pressure",
            HeightFeature::Radius => "radius",
            HeightFeature::Velocity => "velocity",
            HeightFeature::Acceleration => "acceleration",
            HeightFeature::None => "none",
        })
    }
}

impl FromStr for HeightFeature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        HeightFeature::ALL
            .into_iter()
            .find(|f| f.to_string() == key)
            .ok_or_else(|| Error::UnknownFeature(s.trim().to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<AttributedPoint>,
    pub height_feature: HeightFeature,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.points.first().map_or(3, AttributedPoint::channels)
    }
}

/// Lifts a signal into 3D: `(x, y)` from the pen position, `z` from the chosen
/// feature. With `with_color`, radius/velocity/acceleration ride along as an
/// `(r, g, b)` triple.
pub fn build_point_cloud(
    signal: &HandDrawnSignal,
    height_feature: HeightFeature,
    with_color: bool,
) -> Result<PointCloud> {
    if signal.is_empty() {
        return Err(Error::EmptyStream);
    }
    let n = signal.len();
    if signal.radius.len() != n || signal.velocity.len() != n || signal.acceleration.len() != n {
        return Err(Error::invalid("signal kinematics have not been derived"));
    }
    let points = (0..n)
        .map(|i| {
            let s = &signal.samples[i];
            AttributedPoint {
                x: s.x,
                y: s.y,
                z: height_feature.value(signal, i),
                color: with_color
                    .then(|| [signal.radius[i], signal.velocity[i], signal.acceleration[i]]),
            }
        })
        .collect();
    Ok(PointCloud { points, height_feature })
}

/// `w` consecutive points starting at `start`.
#[derive(Debug, Clone, Copy)]
pub struct Patch<'a> {
    pub start: usize,
    pub points: &'a [AttributedPoint],
}

/// Window start offsets `0, s, 2s, ...`; `floor((n - w) / s) + 1` of them.
pub fn patch_offsets(n: usize, w: usize, s: usize) -> Result<Vec<usize>> {
    if w == 0 || s == 0 {
        return Err(Error::invalid("window and step must be at least 1"));
    }
    if w > n {
        return Err(Error::invalid(format!(
            "window size {w} exceeds point count {n}"
        )));
    }
    Ok((0..=(n - w) / s).map(|j| j * s).collect())
}

pub fn segment_patches(cloud: &PointCloud, w: usize, s: usize) -> Result<Vec<Patch<'_>>> {
    Ok(patch_offsets(cloud.len(), w, s)?
        .into_iter()
        .map(|start| Patch {
            start,
            points: &cloud.points[start..start + w],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Superpoint {
    pub index: usize,
    pub lo: usize,
    pub hi: usize,
}

impl Superpoint {
    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi == self.lo
    }

    pub fn range(&self) -> Range<usize> {
        self.lo..self.hi
    }
}

/// Splits `0..n` into `count` contiguous ranges whose sizes differ by at most
/// one; the first `n % count` ranges get the extra point.
pub fn superpoint_ranges(n: usize, count: usize) -> Result<Vec<Superpoint>> {
    if count == 0 || count > n {
        return Err(Error::invalid(format!(
            "superpoint count {count} must be in 1..={n}"
        )));
    }
    let base = n / count;
    let extra = n % count;
    let mut lo = 0;
    Ok((0..count)
        .map(|index| {
            let hi = lo + base + usize::from(index < extra);
            let sp = Superpoint { index, lo, hi };
            lo = hi;
            sp
        })
        .collect())
}

pub fn segment_superpoints(cloud: &PointCloud, count: usize) -> Result<Vec<Superpoint>> {
    superpoint_ranges(cloud.len(), count)
}

/// Binary superpoint state: `true` keeps the superpoint, `false` perturbs it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PerturbationMask(pub Vec<bool>);

impl PerturbationMask {
    pub fn all_ones(len: usize) -> Self {
        PerturbationMask(vec![true; len])
    }

    pub fn all_zeros(len: usize) -> Self {
        PerturbationMask(vec![false; len])
    }

    /// All ones except `index`.
    pub fn single_off(len: usize, index: usize) -> Self {
        let mut bits = vec![true; len];
        bits[index] = false;
        PerturbationMask(bits)
    }

    /// Bit `j` is set iff bit `j` of `code` is set.
    pub fn from_code(code: u64, len: usize) -> Self {
        PerturbationMask((0..len).map(|j| code >> j & 1 == 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_all_ones(&self) -> bool {
        self.0.iter().all(|&b| b)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from(u8::from(b))).collect()
    }
}

impl fmt::Display for PerturbationMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Collapse every point of a perturbed superpoint onto its (x, y, z) mean.
    Centroid,
    /// Keep (x, y) and set z to the superpoint's mean height.
    HeightFlatten,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::Centroid, Strategy::HeightFlatten];

    pub fn apply(
        self,
        cloud: &PointCloud,
        superpoints: &[Superpoint],
        mask: &PerturbationMask,
    ) -> Result<PointCloud> {
        match self {
            Strategy::Centroid => perturb_centroid(cloud, superpoints, mask),
            Strategy::HeightFlatten => perturb_height_flatten(cloud, superpoints, mask),
        }
    }

    /// Perturbs the points of one superpoint in place.
    pub(crate) fn perturb_slice(self, points: &mut [AttributedPoint]) {
        if points.is_empty() {
            return;
        }
        let mz = shifted_mean(points, |p| p.z);
        match self {
            Strategy::Centroid => {
                let mx = shifted_mean(points, |p| p.x);
                let my = shifted_mean(points, |p| p.y);
                for p in points.iter_mut() {
                    p.x = mx;
                    p.y = my;
                    p.z = mz;
                }
            }
            Strategy::HeightFlatten => points.iter_mut().for_each(|p| p.z = mz),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Centroid => "centroid",
            Strategy::HeightFlatten => "height_flatten",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "centroid" => Ok(Strategy::Centroid),
            "height_flatten" | "heightflatten" | "height" => Ok(Strategy::HeightFlatten),
            other => Err(Error::invalid(format!("unknown perturbation strategy `{other}`"))),
        }
    }
}

/// Mean computed relative to the first value, so a constant slice maps to
/// itself exactly and perturbing twice equals perturbing once.
fn shifted_mean(points: &[AttributedPoint], f: impl Fn(&AttributedPoint) -> f64) -> f64 {
    let base = f(&points[0]);
    base + points.iter().map(|p| f(p) - base).sum::<f64>() / points.len() as f64
}

fn perturb(
    strategy: Strategy,
    cloud: &PointCloud,
    superpoints: &[Superpoint],
    mask: &PerturbationMask,
) -> Result<PointCloud> {
    if mask.len() != superpoints.len() {
        return Err(Error::LengthMismatch {
            expected: superpoints.len(),
            got: mask.len(),
        });
    }
    let mut out = cloud.clone();
    for (sp, &keep) in superpoints.iter().zip(mask.bits()) {
        if !keep {
            if sp.hi > out.points.len() {
                return Err(Error::invalid("superpoint range exceeds cloud"));
            }
            strategy.perturb_slice(&mut out.points[sp.range()]);
        }
    }
    Ok(out)
}

pub fn perturb_centroid(
    cloud: &PointCloud,
    superpoints: &[Superpoint],
    mask: &PerturbationMask,
) -> Result<PointCloud> {
    perturb(Strategy::Centroid, cloud, superpoints, mask)
}

pub fn perturb_height_flatten(
    cloud: &PointCloud,
    superpoints: &[Superpoint],
    mask: &PerturbationMask,
) -> Result<PointCloud> {
    perturb(Strategy::HeightFlatten, cloud, superpoints, mask)
}
