//! The five subcommands. Each reads the resolved config and input files and
//! writes its outputs plus a manifest under the run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pointexplainer::classifier::{
    encode_patches, train, vote, Checkpoint, Diagnoser, EncodedPatch, PointSetModel,
};
use pointexplainer::clinical::{
    bootstrap_ci, brier_score, calibration, calibration_profile, classification_metrics,
    decision_curve, roc_auc, stratified_kfold, sweep_csv, threshold_sweep, BootstrapBand,
    Metric, MetricSet, ScoredSubject, SubjectPatches,
};
use pointexplainer::explain::InstanceExplainer;
use pointexplainer::fidelity::{fidelity_report, report_csv, report_table, FidelityRow, InstanceFidelity};
use pointexplainer::pointcloud::{build_point_cloud, PointCloud, Strategy};
use pointexplainer::render::render_svg;
use pointexplainer::signal::{load_recording, HandDrawnSignal, Label};
use pointexplainer::synth::{generate_cohort, write_cohort};
use pointexplainer::{par, Error as CoreError};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::Outputs;

/// Held-out predictions for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutOfFold {
    pub subject_id: String,
    pub label: Label,
    pub fold: usize,
    pub patch_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub fold_metrics: Vec<MetricSet>,
    pub out_of_fold: Vec<OutOfFold>,
}

pub fn cmd_synth(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    config.validate()?;
    let params = config.cohort_params();
    params.validate()?;
    let cohort = generate_cohort(&params)?;
    let dir = config.data_dir();
    let csvs = write_cohort(&cohort, &dir)
        .map_err(|e| CliError::Data(format!("cannot write cohort to {}: {e}", dir.display())))?;
    let mut out = Outputs::new(&config.run_dir);
    for csv in &csvs {
        out.record(csv);
        out.record(&pointexplainer::signal::sidecar_path(csv));
    }
    out.finish("synth", config)?;
    Ok(csvs)
}

/// Every `*.csv` recording under the data directory, sorted by file name.
pub fn load_cohort(config: &RunConfig) -> Result<Vec<HandDrawnSignal>, CliError> {
    let dir = config.data_dir();
    let entries = fs::read_dir(&dir)
        .map_err(|e| CliError::Data(format!("cannot read data directory {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Data(format!("no recordings in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| load_recording(p, config.schema).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))))
        .collect()
}

/// Point cloud of every recording under the configured height feature.
pub fn clouds(config: &RunConfig, cohort: &[HandDrawnSignal]) -> Result<Vec<PointCloud>, CliError> {
    Ok(cohort
        .iter()
        .map(|s| build_point_cloud(s, config.height_feature, config.with_color))
        .collect::<pointexplainer::Result<Vec<_>>>()?)
}

/// Fold index of every subject.
pub fn fold_of(config: &RunConfig, cohort: &[HandDrawnSignal]) -> Result<Vec<usize>, CliError> {
    let labels: Vec<Label> = cohort.iter().map(|s| s.label).collect();
    if let Some(s) = cohort.iter().find(|s| s.label == Label::Unknown) {
        return Err(CliError::Data(format!("subject {} has no PD/HC label", s.subject_id)));
    }
    let folds = stratified_kfold(&labels, config.folds, config.seed)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let mut assignment = vec![0; cohort.len()];
    for (k, members) in folds.iter().enumerate() {
        for &i in members {
            assignment[i] = k;
        }
    }
    Ok(assignment)
}

fn train_dir(config: &RunConfig) -> PathBuf {
    config.run_dir.join("train")
}

fn checkpoint_path(config: &RunConfig, fold: usize) -> PathBuf {
    train_dir(config).join(format!("fold{fold}.model.json"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

pub fn cmd_train(config: &RunConfig) -> Result<TrainOutcome, CliError> {
    config.validate()?;
    let cohort = load_cohort(config)?;
    let clouds = clouds(config, &cohort)?;
    let fold = fold_of(config, &cohort)?;
    let encoded: Vec<Vec<EncodedPatch>> = clouds
        .iter()
        .map(|c| encode_patches(c, config.window, config.step))
        .collect::<pointexplainer::Result<_>>()?;
    let dir = train_dir(config);
    let mut out = Outputs::new(&config.run_dir);
    let mut fold_metrics = Vec::new();
    let mut out_of_fold = Vec::new();

    for k in 0..config.folds {
        let gather = |held_out: bool| {
            let (mut x, mut y) = (Vec::new(), Vec::new());
            for (i, patches) in encoded.iter().enumerate() {
                if (fold[i] == k) == held_out {
                    x.extend(patches.iter().cloned());
                    y.extend(std::iter::repeat_n(cohort[i].label.is_pd(), patches.len()));
                }
            }
            (x, y)
        };
        let (train_x, train_y) = gather(false);
        let (val_x, val_y) = gather(true);
        let model = PointSetModel::new(config.model_config(), config.seed.wrapping_add(k as u64))?;
        let (model, history) =
            train(model, &train_x, &train_y, &config.train_config(k), Some((&val_x, &val_y)))?;
        let ckpt = checkpoint_path(config, k);
        out.write(&ckpt, Checkpoint::new(model.clone()).to_json()?)?;
        out.write(&dir.join(format!("fold{k}_curve.csv")), history.to_csv())?;

        let mut scored = Vec::new();
        for (i, patches) in encoded.iter().enumerate().filter(|(i, _)| fold[*i] == k) {
            let probs = model.predict(patches)?;
            scored.push(ScoredSubject::new(
                cohort[i].subject_id.clone(),
                vote(&probs, config.alpha),
                cohort[i].label,
            )?);
            out_of_fold.push(OutOfFold {
                subject_id: cohort[i].subject_id.clone(),
                label: cohort[i].label,
                fold: k,
                patch_probs: probs,
            });
        }
        fold_metrics.push(classification_metrics(&scored, 0.5)?);
    }
    out_of_fold.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));

    out.write(&dir.join("out_of_fold.json"), serde_json::to_string(&out_of_fold)?)?;
    let mut predictions = String::from("subject_id,label,fold,y_final,predicted\n");
    for s in &out_of_fold {
        let y = vote(&s.patch_probs, config.alpha);
        let predicted = pointexplainer::classifier::decide(y);
        let _ = writeln!(predictions, "{},{},{},{:.6},{}", s.subject_id, s.label, s.fold, y, predicted);
    }
    out.write(&dir.join("predictions.csv"), predictions)?;
    out.write(&dir.join("metrics.csv"), metrics_csv(&fold_metrics))?;
    out.write(&dir.join("metrics.txt"), metrics_table(&fold_metrics))?;

    let folds: Vec<Vec<SubjectPatches>> = (0..config.folds)
        .map(|k| {
            out_of_fold
                .iter()
                .filter(|s| s.fold == k)
                .map(|s| SubjectPatches {
                    subject_id: s.subject_id.clone(),
                    label: s.label,
                    patch_probs: s.patch_probs.clone(),
                })
                .collect()
        })
        .collect();
    let grid: Vec<f64> = (0..config.curve_points)
        .map(|i| i as f64 / (config.curve_points - 1) as f64)
        .collect();
    out.write(&dir.join("threshold_sweep.csv"), sweep_csv(&threshold_sweep(&folds, &grid)?))?;
    out.finish("train", config)?;
    Ok(TrainOutcome { fold_metrics, out_of_fold })
}

/// Mean and population standard deviation of the defined values.
fn mean_std(values: &[Option<f64>]) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    Some((mean, (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()))
}

pub fn metrics_csv(folds: &[MetricSet]) -> String {
    let mut out = String::from("fold,accuracy,sensitivity,specificity,f1,tp,fp,tn,fn\n");
    for (k, m) in folds.iter().enumerate() {
        let c = m.confusion;
        let _ = writeln!(
            out,
            "{k},{},{},{},{},{},{},{},{}",
            fmt_opt(m.accuracy),
            fmt_opt(m.sensitivity),
            fmt_opt(m.specificity),
            fmt_opt(m.f1),
            c.tp,
            c.fp,
            c.tn,
            c.fn_
        );
    }
    for (name, pick) in [("mean", 0usize), ("std", 1)] {
        out.push_str(name);
        for metric in Metric::ALL {
            let vals: Vec<Option<f64>> = folds.iter().map(|m| m.get(metric)).collect();
            let cell = mean_std(&vals).map(|(m, s)| if pick == 0 { m } else { s });
            let _ = write!(out, ",{}", fmt_opt(cell));
        }
        out.push_str(",,,,\n");
    }
    out
}

fn metrics_table(folds: &[MetricSet]) -> String {
    let mut out = String::from("cross-validated diagnosis (subject level)\n");
    for metric in Metric::ALL {
        let vals: Vec<Option<f64>> = folds.iter().map(|m| m.get(metric)).collect();
        let per_fold: Vec<String> = vals.iter().map(|v| fmt_opt(*v)).collect();
        let summary = mean_std(&vals)
            .map(|(m, s)| format!("{m:.4} ± {s:.4}"))
            .unwrap_or_else(|| "undefined".into());
        let _ = writeln!(out, "{:<12} {}  folds: {}", metric.name(), summary, per_fold.join(" "));
    }
    out
}

/// Loads the held-out model of every fold.
pub fn load_fold_models(config: &RunConfig) -> Result<Vec<PointSetModel>, CliError> {
    (0..config.folds)
        .map(|k| {
            let path = checkpoint_path(config, k);
            Checkpoint::load(&path)
                .map(|c| c.model)
                .map_err(|e| CliError::Data(format!("cannot load {}: {e}", path.display())))
        })
        .collect()
}

pub struct ExplainOutput {
    pub map_path: PathBuf,
    pub svg_path: PathBuf,
}

pub fn cmd_explain(config: &RunConfig, subject_id: &str) -> Result<ExplainOutput, CliError> {
    config.validate()?;
    let cohort = load_cohort(config)?;
    let index = cohort
        .iter()
        .position(|s| s.subject_id == subject_id)
        .ok_or_else(|| CliError::Data(format!("unknown subject `{subject_id}`")))?;
    let fold = fold_of(config, &cohort)?[index];
    let models = load_fold_models(config)?;
    let signal = &cohort[index];
    let cloud = build_point_cloud(signal, config.height_feature, config.with_color)?;
    let diagnoser = Diagnoser::new(&models[fold], config.window, config.step, config.alpha)?;
    let settings = config.explain_settings();
    let explainer = InstanceExplainer::new(diagnoser, &cloud, subject_id, config.strategy, &settings)?;
    let explanation = explainer.explain(config.explain_kind, &settings)?;

    let dir = config.run_dir.join("explain");
    let stem = format!("{subject_id}_{}_{}", config.strategy, config.explain_kind);
    let mut out = Outputs::new(&config.run_dir);
    let map_path = dir.join(format!("{stem}.json"));
    out.write(&map_path, explanation.map.to_json()?)?;
    let xy: Vec<(f64, f64)> = signal.samples.iter().map(|s| (s.x, s.y)).collect();
    let title = format!(
        "{subject_id}: {} surrogate, {} perturbation, F = {:.4}",
        config.explain_kind,
        config.strategy,
        explainer.original()
    );
    let svg = render_svg(&xy, &explanation.map.per_point(), config.smoothing, &title)?;
    let svg_path = dir.join(format!("{stem}.svg"));
    out.write(&svg_path, svg)?;
    out.finish("explain", config)?;
    Ok(ExplainOutput { map_path, svg_path })
}

pub struct VerifyOutcome {
    pub instances: Vec<InstanceFidelity>,
    pub rows: Vec<FidelityRow>,
}

/// Explains subjects with their held-out fold model under both perturbation
/// strategies and every configured surrogate kind.
pub fn cmd_verify(config: &RunConfig) -> Result<VerifyOutcome, CliError> {
    config.validate()?;
    let cohort = load_cohort(config)?;
    let fold = fold_of(config, &cohort)?;
    let models = load_fold_models(config)?;
    let clouds = clouds(config, &cohort)?;
    let settings = config.explain_settings();
    let count = match config.verify_subjects {
        0 => cohort.len(),
        n => n.min(cohort.len()),
    };
    let per_subject: Vec<Result<Vec<InstanceFidelity>, CoreError>> = par::map_range(count, |i| {
        let diagnoser = Diagnoser::new(&models[fold[i]], config.window, config.step, config.alpha)?;
        let mut found = Vec::new();
        for strategy in Strategy::ALL {
            let explainer =
                InstanceExplainer::new(diagnoser, &clouds[i], cohort[i].subject_id.clone(), strategy, &settings)?;
            for &kind in &config.surrogates {
                found.push(explainer.explain(kind, &settings)?.fidelity);
            }
        }
        Ok(found)
    });
    let mut instances = Vec::new();
    for r in per_subject {
        instances.extend(r?);
    }
    let rows = fidelity_report(&instances)?;

    let dir = config.run_dir.join("verify");
    let mut out = Outputs::new(&config.run_dir);
    let mut csv = String::from("subject_id,strategy,kind,pc,ca,ac,da\n");
    for i in &instances {
        let _ = writeln!(
            csv,
            "{},{},{},{:.6},{},{},{:.6}",
            i.instance_id,
            i.strategy,
            i.kind,
            i.pc,
            i.ca,
            fmt_opt(i.ac),
            i.da
        );
    }
    out.write(&dir.join("instances.csv"), csv)?;
    out.write(&dir.join("fidelity.csv"), report_csv(&rows))?;
    out.write(&dir.join("fidelity.txt"), report_table(&rows))?;
    out.finish("verify", config)?;
    Ok(VerifyOutcome { instances, rows })
}

pub fn load_out_of_fold(config: &RunConfig) -> Result<Vec<OutOfFold>, CliError> {
    let path = train_dir(config).join("out_of_fold.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn scored_subjects(config: &RunConfig, oof: &[OutOfFold]) -> Result<Vec<ScoredSubject>, CliError> {
    Ok(oof
        .iter()
        .map(|s| ScoredSubject::new(s.subject_id.clone(), vote(&s.patch_probs, config.alpha), s.label))
        .collect::<pointexplainer::Result<_>>()?)
}

pub struct ReportOutcome {
    pub auc: f64,
    pub auc_band: BootstrapBand,
    pub brier: f64,
}

fn band_rows(out: &mut String, x: &[f64], band: &BootstrapBand, skip: impl Fn(usize) -> bool) {
    for (i, x) in x.iter().enumerate() {
        if skip(i) {
            continue;
        }
        let cell = |v: f64| if v.is_finite() { format!("{v:.6}") } else { String::new() };
        let _ = writeln!(out, "{x:.6},{},{},{}", cell(band.estimate[i]), cell(band.lo[i]), cell(band.hi[i]));
    }
}

/// ROC, calibration and decision curves of the out-of-fold scores, each
/// with a percentile bootstrap band.
pub fn cmd_report(config: &RunConfig) -> Result<ReportOutcome, CliError> {
    config.validate()?;
    let scored = scored_subjects(config, &load_out_of_fold(config)?)?;
    let n = config.curve_points;
    let resamples = config.bootstrap_resamples;
    let dir = config.run_dir.join("report");
    let mut out = Outputs::new(&config.run_dir);

    let fpr: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let roc = roc_auc(&scored)?;
    let roc_stat = |s: &[ScoredSubject]| {
        roc_auc(s).ok().map(|r| {
            let mut v: Vec<f64> = fpr.iter().map(|&x| r.tpr_at(x)).collect();
            v.push(r.auc);
            v
        })
    };
    let roc_band = bootstrap_ci(&scored, roc_stat, resamples, 0.95, config.seed)?;
    let mut csv = String::from("x,y,lo,hi\n");
    band_rows(&mut csv, &fpr, &roc_band, |_| false);
    out.write(&dir.join("roc.csv"), csv)?;
    let auc_band = BootstrapBand {
        estimate: vec![roc.auc],
        mean: vec![roc_band.mean[n]],
        lo: vec![roc_band.lo[n]],
        hi: vec![roc_band.hi[n]],
        resamples,
    };

    let bins = config.calibration_bins;
    let cal = calibration(&scored, bins)?;
    let cal_stat = |s: &[ScoredSubject]| {
        let mut v = calibration_profile(s, bins);
        v.push(brier_score(s).ok()?);
        Some(v)
    };
    let cal_band = bootstrap_ci(&scored, cal_stat, resamples, 0.95, config.seed)?;
    let centers: Vec<f64> = (0..bins).map(|b| (b as f64 + 0.5) / bins as f64).collect();
    let mut csv = String::from("x,y,lo,hi\n");
    band_rows(&mut csv, &centers, &cal_band, |i| !cal_band.estimate[i].is_finite());
    out.write(&dir.join("calibration.csv"), csv)?;

    let alphas: Vec<f64> = (1..n - 1).map(|i| i as f64 / (n - 1) as f64).collect();
    let dca = decision_curve(&scored, &alphas)?;
    let dca_stat = |s: &[ScoredSubject]| {
        decision_curve(s, &alphas).ok().map(|c| c.iter().map(|p| p.model).collect::<Vec<_>>())
    };
    let dca_band = bootstrap_ci(&scored, dca_stat, resamples, 0.95, config.seed)?;
    let mut csv = String::from("x,y,lo,hi,treat_all,treat_none\n");
    for (i, p) in dca.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            p.alpha, p.model, dca_band.lo[i], dca_band.hi[i], p.treat_all, p.treat_none
        );
    }
    out.write(&dir.join("dca.csv"), csv)?;

    let at_half = decision_curve(&scored, &[0.5])?[0];
    let mut summary = String::new();
    let _ = writeln!(summary, "subjects = {}", scored.len());
    let _ = writeln!(summary, "bootstrap_resamples = {resamples}");
    let _ = writeln!(summary, "auc = {}", roc.auc);
    let _ = writeln!(summary, "auc_ci = {:.6},{:.6}", auc_band.lo[0], auc_band.hi[0]);
    let _ = writeln!(summary, "brier = {}", cal.brier);
    let _ = writeln!(summary, "brier_ci = {:.6},{:.6}", cal_band.lo[bins], cal_band.hi[bins]);
    let _ = writeln!(summary, "net_benefit_at_0.5 = {:.6}", at_half.model);
    let _ = writeln!(summary, "treat_all_at_0.5 = {:.6}", at_half.treat_all);
    out.write(&dir.join("summary.txt"), summary)?;
    out.finish("report", config)?;
    Ok(ReportOutcome { auc: roc.auc, auc_band, brier: cal.brier })
}

/// Every file under `dir`, sorted, with its contents.
pub fn snapshot(dir: &Path) -> std::io::Result<Vec<(PathBuf, Vec<u8>)>> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((path.clone(), fs::read(&path)?));
            }
        }
    }
    files.sort();
    Ok(files)
}
