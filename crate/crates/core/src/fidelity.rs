//! Faithfulness of an explanation: behavioural agreement between the black
//! box and its surrogate (PC, CA), and agreement between attributions and the
//! decision change caused by removing each superpoint (AC, DA).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::classifier::Diagnoser;
use crate::error::{Error, Result};
use crate::pointcloud::{PerturbationMask, PointCloud, Strategy, Superpoint};
use crate::surrogate::{MaskScorer, SurrogateKind};

/// Sign with `sign(0) = 0`.
pub fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// `|F(X) - G(1)|`.
pub fn probability_consistency(f_out: f64, g_out: f64) -> f64 {
    (f_out - g_out).abs()
}

/// 1 when both outputs fall on the same side of 0.5 (both exactly 0.5 counts).
pub fn category_alignment(f_out: f64, g_out: f64) -> f64 {
    f64::from(u8::from(sign(f_out - 0.5) == sign(g_out - 0.5)))
}

/// `F(X) - F(X \ S_j)` for every superpoint, removing one at a time with the
/// scorer's perturbation strategy.
pub fn decision_deltas(scorer: &MaskScorer<'_>, superpoints: usize) -> Result<Vec<f64>> {
    let mut masks = vec![PerturbationMask::all_ones(superpoints)];
    masks.extend((0..superpoints).map(|j| PerturbationMask::single_off(superpoints, j)));
    let scores = scorer.score(&masks)?;
    Ok(scores[1..].iter().map(|s| scores[0] - s).collect())
}

/// Same as [`decision_deltas`], materializing every perturbed cloud.
pub fn decision_deltas_direct(
    black_box: &Diagnoser<'_>,
    cloud: &PointCloud,
    superpoints: &[Superpoint],
    strategy: Strategy,
) -> Result<Vec<f64>> {
    let base = black_box.score(cloud)?;
    (0..superpoints.len())
        .map(|j| {
            let mask = PerturbationMask::single_off(superpoints.len(), j);
            Ok(base - black_box.score(&strategy.apply(cloud, superpoints, &mask)?)?)
        })
        .collect()
}

/// Pearson correlation; `None` when either input has (numerically) zero
/// variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), got: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::invalid("correlation needs at least two values"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let flat = |ss: f64, v: &[f64]| {
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        ss <= n * (1e-13 * scale).powi(2)
    };
    if flat(saa, a) || flat(sbb, b) {
        return Ok(None);
    }
    Ok(Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)))
}

/// Pearson correlation of `|w|` with `|dF|`; `None` when undefined.
pub fn attribution_consistency(weights: &[f64], deltas: &[f64]) -> Result<Option<f64>> {
    let aw: Vec<f64> = weights.iter().map(|w| w.abs()).collect();
    let ad: Vec<f64> = deltas.iter().map(|d| d.abs()).collect();
    pearson(&aw, &ad)
}

/// Fraction of superpoints where `sign(w) = sign(dF)`.
pub fn direction_alignment(weights: &[f64], deltas: &[f64]) -> Result<f64> {
    if weights.len() != deltas.len() {
        return Err(Error::LengthMismatch { expected: weights.len(), got: deltas.len() });
    }
    if weights.is_empty() {
        return Err(Error::invalid("direction alignment needs at least one superpoint"));
    }
    let hits = weights
        .iter()
        .zip(deltas)
        .filter(|(w, d)| sign(**w) == sign(**d))
        .count();
    Ok(hits as f64 / weights.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFidelity {
    pub instance_id: String,
    pub kind: SurrogateKind,
    pub strategy: Strategy,
    pub pc: f64,
    pub ca: f64,
    pub ac: Option<f64>,
    pub da: f64,
}

impl InstanceFidelity {
    /// All four metrics from the black-box output `f_out`, the surrogate's
    /// prediction on the unperturbed mask `g_out`, attributions and deltas.
    pub fn evaluate(
        instance_id: impl Into<String>,
        kind: SurrogateKind,
        strategy: Strategy,
        f_out: f64,
        g_out: f64,
        weights: &[f64],
        deltas: &[f64],
    ) -> Result<Self> {
        Ok(InstanceFidelity {
            instance_id: instance_id.into(),
            kind,
            strategy,
            pc: probability_consistency(f_out, g_out),
            ca: category_alignment(f_out, g_out),
            ac: attribution_consistency(weights, deltas)?,
            da: direction_alignment(weights, deltas)?,
        })
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Summary { mean, std: var.sqrt(), count: values.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityRow {
    pub kind: SurrogateKind,
    pub strategy: Strategy,
    pub instances: usize,
    pub pc: Summary,
    pub ca: Summary,
    /// `None` when AC was undefined for every instance.
    pub ac: Option<Summary>,
    pub ac_undefined: usize,
    pub da: Summary,
}

/// Aggregates per-instance metrics by (strategy, kind). Instances with an
/// undefined AC are left out of the AC summary and counted.
pub fn fidelity_report(instances: &[InstanceFidelity]) -> Result<Vec<FidelityRow>> {
    if instances.is_empty() {
        return Err(Error::invalid("fidelity report needs at least one instance"));
    }
    let mut groups: BTreeMap<(u8, SurrogateKind), Vec<&InstanceFidelity>> = BTreeMap::new();
    for inst in instances {
        let s = Strategy::ALL.iter().position(|s| *s == inst.strategy).unwrap_or(0) as u8;
        groups.entry((s, inst.kind)).or_default().push(inst);
    }
    Ok(groups
        .into_values()
        .map(|group| {
            let col = |f: fn(&InstanceFidelity) -> f64| group.iter().map(|i| f(i)).collect::<Vec<_>>();
            let ac: Vec<f64> = group.iter().filter_map(|i| i.ac).collect();
            FidelityRow {
                kind: group[0].kind,
                strategy: group[0].strategy,
                instances: group.len(),
                pc: Summary::of(&col(|i| i.pc)).expect("non-empty group"),
                ca: Summary::of(&col(|i| i.ca)).expect("non-empty group"),
                ac: Summary::of(&ac),
                ac_undefined: group.len() - ac.len(),
                da: Summary::of(&col(|i| i.da)).expect("non-empty group"),
            }
        })
        .collect())
}

pub fn report_csv(rows: &[FidelityRow]) -> String {
    let mut out = String::from(
        "strategy,kind,instances,pc_mean,pc_std,ca_mean,ca_std,ac_mean,ac_std,ac_undefined,da_mean,da_std\n",
    );
    for r in rows {
        let (ac_mean, ac_std) = r
            .ac
            .map(|s| (format!("{:.6}", s.mean), format!("{:.6}", s.std)))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{},{},{},{:.6},{:.6}",
            r.strategy, r.kind, r.instances, r.pc.mean, r.pc.std, r.ca.mean, r.ca.std, ac_mean,
            ac_std, r.ac_undefined, r.da.mean, r.da.std
        );
    }
    out
}

/// Plain-text table, one line per (strategy, kind), `mean ± std` cells.
pub fn report_table(rows: &[FidelityRow]) -> String {
    let cell = |s: &Summary| format!("{:.4} ± {:.4}", s.mean, s.std);
    let mut out = format!(
        "{:<15} {:<11} {:>17} {:>17} {:>17} {:>17}\n",
        "strategy", "kind", "PC (lower)", "CA", "AC", "DA"
    );
    for r in rows {
        let ac = r.ac.as_ref().map(cell).unwrap_or_else(|| "undefined".into());
        let _ = writeln!(
            out,
            "{:<15} {:<11} {:>17} {:>17} {:>17} {:>17}",
            r.strategy.to_string(),
            r.kind.to_string(),
            cell(&r.pc),
            cell(&r.ca),
            ac,
            cell(&r.da)
        );
    }
    out
}
