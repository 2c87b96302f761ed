//! Diagnostic metrics, subject-level cross-validation folds, and the
//! clinical-applicability analyses: ROC, calibration, decision curves and
//! bootstrap confidence bands.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{decide, vote};
use crate::error::{Error, Result};
use crate::par;
use crate::signal::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSubject {
    pub subject_id: String,
    pub score: f64,
    pub label: Label,
}

impl ScoredSubject {
    pub fn new(subject_id: impl Into<String>, score: f64, label: Label) -> Result<Self> {
        if !score.is_finite() {
            return Err(Error::Numeric(format!("non-finite score {score}")));
        }
        if label == Label::Unknown {
            return Err(Error::invalid("scored subject needs a PD or HC label"));
        }
        Ok(ScoredSubject { subject_id: subject_id.into(), score, label })
    }

    fn positive(&self) -> bool {
        self.label.is_pd()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    /// PD is predicted when `score >= alpha`.
    pub fn at(scored: &[ScoredSubject], alpha: f64) -> Confusion {
        let mut c = Confusion::default();
        for s in scored {
            match (s.score >= alpha, s.positive()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// `None` marks a metric whose denominator is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
    pub confusion: Confusion,
}

impl MetricSet {
    pub fn from_confusion(c: Confusion) -> MetricSet {
        MetricSet {
            accuracy: ratio(c.tp + c.tn, c.total()),
            sensitivity: ratio(c.tp, c.tp + c.fn_),
            specificity: ratio(c.tn, c.tn + c.fp),
            f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
            confusion: c,
        }
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Accuracy => self.accuracy,
            Metric::Sensitivity => self.sensitivity,
            Metric::Specificity => self.specificity,
            Metric::F1 => self.f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Accuracy,
    Sensitivity,
    Specificity,
    F1,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Accuracy, Metric::Sensitivity, Metric::Specificity, Metric::F1];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Sensitivity => "sensitivity",
            Metric::Specificity => "specificity",
            Metric::F1 => "f1",
        }
    }
}

pub fn classification_metrics(scored: &[ScoredSubject], alpha: f64) -> Result<MetricSet> {
    if scored.is_empty() {
        return Err(Error::invalid("metrics need at least one subject"));
    }
    Ok(MetricSet::from_confusion(Confusion::at(scored, alpha)))
}

/// Splits subject indices into `k` folds, stratified by label. Each class is
/// shuffled and dealt round-robin, the dealing position carrying over from
/// one class to the next so fold sizes stay balanced as well.
pub fn stratified_kfold(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid("k-fold needs k >= 2"));
    }
    if labels.contains(&Label::Unknown) {
        return Err(Error::invalid("every subject needs a PD or HC label"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut slot = 0;
    for class in [Label::Pd, Label::Hc] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::invalid(format!(
                "class {class} has {} subjects, fewer than {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for m in members {
            folds[slot % k].push(m);
            slot += 1;
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    /// True positive rate at `fpr`, interpolating linearly along the curve.
    /// On a vertical segment the highest rate is taken.
    pub fn tpr_at(&self, fpr: f64) -> f64 {
        let mut best = 0.0f64;
        for pair in self.points.windows(2) {
            let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
            if fpr < x0 || fpr > x1 {
                continue;
            }
            let y = if x1 > x0 { y0 + (y1 - y0) * (fpr - x0) / (x1 - x0) } else { y1 };
            best = best.max(y);
        }
        best
    }
}

fn class_counts(scored: &[ScoredSubject]) -> (usize, usize) {
    let pos = scored.iter().filter(|s| s.positive()).count();
    (pos, scored.len() - pos)
}

/// ROC curve over every distinct score, with trapezoidal AUC. Tied scores
/// move along a diagonal segment, so the area counts each tie as one half.
pub fn roc_auc(scored: &[ScoredSubject]) -> Result<RocCurve> {
    let (n_pos, n_neg) = class_counts(scored);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined("ROC needs both classes".into()));
    }
    let mut order: Vec<&ScoredSubject> = scored.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    // Twice the area in units of (positive, negative) pairs, kept integral.
    let mut area2 = 0usize;
    let mut i = 0;
    while i < order.len() {
        let t = order[i].score;
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && order[i].score == t {
            if order[i].positive() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp0) * (tp + tp0);
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    let auc = area2 as f64 / (2 * n_pos * n_neg) as f64;
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_score: f64,
    pub observed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Non-empty bins only.
    pub bins: Vec<CalibrationBin>,
    pub brier: f64,
}

pub fn brier_score(scored: &[ScoredSubject]) -> Result<f64> {
    if scored.is_empty() {
        return Err(Error::invalid("Brier score needs at least one subject"));
    }
    let total: f64 = scored
        .iter()
        .map(|s| {
            let y = if s.positive() { 1.0 } else { 0.0 };
            (s.score - y) * (s.score - y)
        })
        .sum();
    Ok(total / scored.len() as f64)
}

fn bin_index(score: f64, bins: usize) -> usize {
    ((score.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

/// Equal-width reliability bins over [0, 1] plus the Brier score.
pub fn calibration(scored: &[ScoredSubject], bins: usize) -> Result<Calibration> {
    if bins == 0 {
        return Err(Error::invalid("calibration needs at least one bin"));
    }
    let brier = brier_score(scored)?;
    let mut sums = vec![(0usize, 0.0f64, 0usize); bins];
    for s in scored {
        let b = &mut sums[bin_index(s.score, bins)];
        b.0 += 1;
        b.1 += s.score;
        b.2 += usize::from(s.positive());
    }
    let width = 1.0 / bins as f64;
    let bins = sums
        .iter()
        .enumerate()
        .filter(|(_, b)| b.0 > 0)
        .map(|(i, &(count, sum, pos))| CalibrationBin {
            lo: i as f64 * width,
            hi: (i + 1) as f64 * width,
            count,
            mean_score: sum / count as f64,
            observed: pos as f64 / count as f64,
        })
        .collect();
    Ok(Calibration { bins, brier })
}

/// Observed PD fraction per bin, NaN for empty bins.
pub fn calibration_profile(scored: &[ScoredSubject], bins: usize) -> Vec<f64> {
    let mut counts = vec![(0usize, 0usize); bins];
    for s in scored {
        let b = &mut counts[bin_index(s.score, bins)];
        b.0 += 1;
        b.1 += usize::from(s.positive());
    }
    counts
        .iter()
        .map(|&(n, p)| if n == 0 { f64::NAN } else { p as f64 / n as f64 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetBenefit {
    pub alpha: f64,
    pub model: f64,
    pub treat_all: f64,
    pub treat_none: f64,
}

/// Net benefit of the model, treat-all and treat-none at each threshold.
pub fn decision_curve(scored: &[ScoredSubject], alphas: &[f64]) -> Result<Vec<NetBenefit>> {
    if scored.is_empty() {
        return Err(Error::invalid("decision curve needs at least one subject"));
    }
    let n = scored.len() as f64;
    let prevalence = class_counts(scored).0 as f64 / n;
    alphas
        .iter()
        .map(|&alpha| {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::invalid(format!("threshold {alpha} outside (0, 1)")));
            }
            let odds = alpha / (1.0 - alpha);
            let c = Confusion::at(scored, alpha);
            Ok(NetBenefit {
                alpha,
                model: c.tp as f64 / n - c.fp as f64 / n * odds,
                treat_all: prevalence - (1.0 - prevalence) * odds,
                treat_none: 0.0,
            })
        })
        .collect()
}

/// `count` evenly spaced thresholds strictly inside (0, 1).
pub fn threshold_grid(count: usize) -> Vec<f64> {
    (1..=count).map(|i| i as f64 / (count + 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBand {
    /// Statistic on the original sample.
    pub estimate: Vec<f64>,
    /// Mean over resamples.
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resamples: usize,
}

pub const MAX_REDRAWS: usize = 10;

/// Linear-interpolated quantile of sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if i + 1 < n {
                sorted[i] + frac * (sorted[i + 1] - sorted[i])
            } else {
                sorted[n - 1]
            }
        }
    }
}

/// Percentile bootstrap over subjects. `statistic` returns `None` when it is
/// undefined on a resample, which is then redrawn up to [`MAX_REDRAWS`]
/// times. Non-finite entries of a defined statistic are skipped per
/// component. Resample `r` draws from its own seeded stream, so results do
/// not depend on thread count.
pub fn bootstrap_ci<F>(
    scored: &[ScoredSubject],
    statistic: F,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapBand>
where
    F: Fn(&[ScoredSubject]) -> Option<Vec<f64>> + Sync,
{
    if scored.len() < 2 {
        return Err(Error::invalid("bootstrap needs at least two subjects"));
    }
    if resamples == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("bootstrap needs resamples > 0 and level in (0, 1)"));
    }
    let estimate =
        statistic(scored).ok_or_else(|| Error::Undefined("statistic undefined on the sample".into()))?;
    let draws: Vec<Result<Vec<f64>>> = par::map_range(resamples, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64 + 1);
        for _ in 0..MAX_REDRAWS {
            let sample: Vec<ScoredSubject> =
                (0..scored.len()).map(|_| scored[rng.random_range(0..scored.len())].clone()).collect();
            if let Some(v) = statistic(&sample) {
                if v.len() != estimate.len() {
                    return Err(Error::LengthMismatch { expected: estimate.len(), got: v.len() });
                }
                return Ok(v);
            }
        }
        Err(Error::Undefined(format!("statistic undefined on {MAX_REDRAWS} draws of resample {r}")))
    });
    let draws = draws.into_iter().collect::<Result<Vec<_>>>()?;
    let tail = (1.0 - level) / 2.0;
    let dims = estimate.len();
    let (mut mean, mut lo, mut hi) = (vec![0.0; dims], vec![0.0; dims], vec![0.0; dims]);
    for d in 0..dims {
        let mut col: Vec<f64> = draws.iter().map(|v| v[d]).filter(|v| v.is_finite()).collect();
        col.sort_by(f64::total_cmp);
        mean[d] = if col.is_empty() { f64::NAN } else { col.iter().sum::<f64>() / col.len() as f64 };
        lo[d] = quantile(&col, tail);
        hi[d] = quantile(&col, 1.0 - tail);
    }
    Ok(BootstrapBand { estimate, mean, lo, hi, resamples })
}

/// Band as CSV `x,y,lo,hi`, where `y` is the full-sample estimate.
pub fn band_csv(x: &[f64], band: &BootstrapBand) -> String {
    let mut out = String::from("x,y,lo,hi\n");
    for (i, x) in x.iter().enumerate() {
        let _ = writeln!(out, "{x:.6},{:.6},{:.6},{:.6}", band.estimate[i], band.lo[i], band.hi[i]);
    }
    out
}

/// Per-patch probabilities of one held-out subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectPatches {
    pub subject_id: String,
    pub label: Label,
    pub patch_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    /// Per metric: (mean, min, max) over folds, `None` if undefined in any fold.
    pub metrics: Vec<Option<(f64, f64, f64)>>,
}

/// Diagnostic performance of each fold as the patch threshold α varies,
/// summarized as mean, minimum and maximum across folds.
pub fn threshold_sweep(folds: &[Vec<SubjectPatches>], alphas: &[f64]) -> Result<Vec<SweepRow>> {
    if folds.is_empty() || folds.iter().any(Vec::is_empty) {
        return Err(Error::invalid("threshold sweep needs non-empty folds"));
    }
    alphas
        .iter()
        .map(|&alpha| {
            let sets = folds
                .iter()
                .map(|fold| {
                    let scored = fold
                        .iter()
                        .map(|s| {
                            let label = decide(vote(&s.patch_probs, alpha));
                            let score = if label.is_pd() { 1.0 } else { 0.0 };
                            ScoredSubject::new(s.subject_id.clone(), score, s.label)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    classification_metrics(&scored, 0.5)
                })
                .collect::<Result<Vec<_>>>()?;
            let metrics = Metric::ALL
                .iter()
                .map(|&m| {
                    let vals: Option<Vec<f64>> = sets.iter().map(|s| s.get(m)).collect();
                    vals.map(|v| {
                        let mean = v.iter().sum::<f64>() / v.len() as f64;
                        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
                        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        (mean, min, max)
                    })
                })
                .collect();
            Ok(SweepRow { alpha, metrics })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("alpha");
    for m in Metric::ALL {
        let _ = write!(out, ",{0}_mean,{0}_min,{0}_max", m.name());
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{:.4}", r.alpha);
        for m in &r.metrics {
            match m {
                Some((mean, min, max)) => {
                    let _ = write!(out, ",{mean:.6},{min:.6},{max:.6}");
                }
                None => out.push_str(",,,"),
            }
        }
        out.push('\n');
    }
    out
}
