use pointexplainer::clinical::{
    bootstrap_ci, brier_score, calibration, classification_metrics, decision_curve, roc_auc,
    stratified_kfold, threshold_grid, threshold_sweep, ScoredSubject, SubjectPatches,
};
use pointexplainer::signal::Label;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scores on a coarse grid so that ties are common.
fn fixture(n: usize, seed: u64) -> Vec<ScoredSubject> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Pd } else { Label::Hc };
            let shift = if label == Label::Pd { 4 } else { 0 };
            let score = f64::from(rng.random_range(0..16) + shift) / 20.0;
            ScoredSubject::new(format!("s{i}"), score, label).unwrap()
        })
        .collect()
}

fn pair_count_auc(scored: &[ScoredSubject]) -> f64 {
    let pos: Vec<f64> = scored.iter().filter(|s| s.label == Label::Pd).map(|s| s.score).collect();
    let neg: Vec<f64> = scored.iter().filter(|s| s.label == Label::Hc).map(|s| s.score).collect();
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

#[test]
fn auc_matches_pair_counting() {
    for seed in 0..100 {
        let scored = fixture(20 + (seed as usize % 21), seed);
        let auc = roc_auc(&scored).unwrap().auc;
        assert!((auc - pair_count_auc(&scored)).abs() < 1e-12, "seed {seed}");
    }
}

#[test]
fn auc_invariant_under_increasing_maps() {
    let maps: [fn(f64) -> f64; 3] = [|s| s * s * s + 2.0 * s, |s| (3.0 * s).exp(), |s| 10.0 * s - 7.0];
    for seed in 0..50 {
        let scored = fixture(30, seed);
        let base = roc_auc(&scored).unwrap().auc;
        for f in maps {
            let mapped: Vec<ScoredSubject> =
                scored.iter().map(|s| ScoredSubject { score: f(s.score), ..s.clone() }).collect();
            assert_eq!(roc_auc(&mapped).unwrap().auc, base);
        }
    }
}

#[test]
fn roc_curve_runs_corner_to_corner() {
    let roc = roc_auc(&fixture(30, 3)).unwrap();
    assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
    assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
    assert!(roc.points.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
    let one_class: Vec<ScoredSubject> = fixture(10, 1).into_iter().filter(|s| s.label == Label::Pd).collect();
    assert!(roc_auc(&one_class).is_err());
}

#[test]
fn brier_matches_resummation() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let scored: Vec<ScoredSubject> = (0..rng.random_range(2..60))
            .map(|i| {
                let label = if rng.random() { Label::Pd } else { Label::Hc };
                ScoredSubject::new(format!("{i}"), rng.random::<f64>(), label).unwrap()
            })
            .collect();
        let mut terms: Vec<f64> = scored
            .iter()
            .map(|s| {
                let y = if s.label == Label::Pd { 1.0 } else { 0.0 };
                (s.score - y).powi(2)
            })
            .collect();
        terms.sort_by(f64::total_cmp);
        let oracle = terms.iter().rev().sum::<f64>() / terms.len() as f64;
        assert!((brier_score(&scored).unwrap() - oracle).abs() < 1e-12);
        assert_eq!(calibration(&scored, 10).unwrap().brier, brier_score(&scored).unwrap());
    }
}

#[test]
fn brier_minimized_at_prevalence() {
    let scored = fixture(37, 5);
    let prevalence =
        scored.iter().filter(|s| s.label == Label::Pd).count() as f64 / scored.len() as f64;
    let constant = |c: f64| {
        let set: Vec<ScoredSubject> =
            scored.iter().map(|s| ScoredSubject { score: c, ..s.clone() }).collect();
        brier_score(&set).unwrap()
    };
    let best = constant(prevalence);
    for c in threshold_grid(201) {
        assert!(constant(c) >= best - 1e-15, "c = {c}");
    }
}

#[test]
fn calibration_bins_cover_every_subject() {
    let scored = fixture(40, 6);
    let cal = calibration(&scored, 10).unwrap();
    assert_eq!(cal.bins.iter().map(|b| b.count).sum::<usize>(), 40);
    assert!(cal.bins.iter().all(|b| b.count > 0 && b.mean_score >= b.lo && b.mean_score <= b.hi));
}

#[test]
fn net_benefit_bounded_by_prevalence() {
    let alphas: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
    for seed in 0..30 {
        let scored = fixture(25, seed);
        let prevalence =
            scored.iter().filter(|s| s.label == Label::Pd).count() as f64 / scored.len() as f64;
        for nb in decision_curve(&scored, &alphas).unwrap() {
            assert!(nb.model <= prevalence + 1e-15);
            assert!(nb.treat_all <= prevalence + 1e-15);
            assert_eq!(nb.treat_none, 0.0);
        }
    }
    assert!(decision_curve(&fixture(10, 0), &[1.0]).is_err());
}

#[test]
fn sensitivity_at_threshold_extremes() {
    let scored = fixture(30, 8);
    assert_eq!(classification_metrics(&scored, 0.0).unwrap().sensitivity, Some(1.0));
    let top = scored.iter().map(|s| s.score).fold(0.0, f64::max);
    let above = classification_metrics(&scored, top.next_up()).unwrap();
    assert_eq!(above.sensitivity, Some(0.0));
    assert_eq!(above.specificity, Some(1.0));
}

#[test]
fn metric_examples() {
    let mut scored = Vec::new();
    for (label, score, n) in [(Label::Pd, 1.0, 9), (Label::Pd, 0.0, 1), (Label::Hc, 0.0, 8), (Label::Hc, 1.0, 2)] {
        for i in 0..n {
            scored.push(ScoredSubject::new(format!("{label}{score}{i}"), score, label).unwrap());
        }
    }
    let m = classification_metrics(&scored, 0.5).unwrap();
    assert!((m.accuracy.unwrap() - 0.85).abs() < 1e-15);
    assert!((m.sensitivity.unwrap() - 0.9).abs() < 1e-15);
    assert!((m.specificity.unwrap() - 0.8).abs() < 1e-15);
    assert!((m.f1.unwrap() - 18.0 / 21.0).abs() < 1e-15);

    let hc_only: Vec<ScoredSubject> = scored.into_iter().filter(|s| s.label == Label::Hc).collect();
    assert_eq!(classification_metrics(&hc_only, 0.5).unwrap().sensitivity, None);
}

#[test]
fn bootstrap_auc_band_contains_estimate() {
    let scored = fixture(40, 9);
    let auc = |s: &[ScoredSubject]| roc_auc(s).ok().map(|r| vec![r.auc]);
    let band = bootstrap_ci(&scored, auc, 1000, 0.95, 10).unwrap();
    assert!(band.lo[0] <= band.estimate[0] && band.estimate[0] <= band.hi[0]);
    assert!(band.lo[0] < band.hi[0]);
    assert_eq!(band, bootstrap_ci(&scored, auc, 1000, 0.95, 10).unwrap());

    let constant = bootstrap_ci(&scored, |_| Some(vec![0.3]), 200, 0.95, 1).unwrap();
    assert_eq!(constant.hi[0] - constant.lo[0], 0.0);
}

#[test]
fn sweep_is_monotone_in_sensitivity() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let folds: Vec<Vec<SubjectPatches>> = (0..3)
        .map(|f| {
            (0..10)
                .map(|i| {
                    let label = if i % 2 == 0 { Label::Pd } else { Label::Hc };
                    let centre = if label == Label::Pd { 0.7 } else { 0.3 };
                    SubjectPatches {
                        subject_id: format!("{f}-{i}"),
                        label,
                        patch_probs: (0..20).map(|_| (centre + rng.random_range(-0.3..0.3f64)).clamp(0.0, 1.0)).collect(),
                    }
                })
                .collect()
        })
        .collect();
    let rows = threshold_sweep(&folds, &threshold_grid(101)).unwrap();
    assert_eq!(rows.len(), 101);
    // sensitivity is the second metric column
    let sens: Vec<f64> = rows.iter().map(|r| r.metrics[1].unwrap().0).collect();
    assert!(sens.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(sens[0], 1.0);
}

proptest! {
    #[test]
    fn kfold_partitions_and_stratifies(n_pd in 3usize..30, n_hc in 3usize..30, k in 2usize..4, seed in any::<u64>()) {
        let labels: Vec<Label> = (0..n_pd).map(|_| Label::Pd).chain((0..n_hc).map(|_| Label::Hc)).collect();
        let folds = stratified_kfold(&labels, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for class in [Label::Pd, Label::Hc] {
            let counts: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| labels[i] == class).count()).collect();
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }
        prop_assert_eq!(folds, stratified_kfold(&labels, k, seed).unwrap());
    }
}
