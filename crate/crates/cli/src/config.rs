//! Run configuration: a flat `key = value` file with command-line overrides.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pointexplainer::classifier::{ModelConfig, TrainConfig};
use pointexplainer::explain::ExplainSettings;
use pointexplainer::pointcloud::{HeightFeature, Strategy};
use pointexplainer::signal::Schema;
use pointexplainer::surrogate::{SurrogateHyper, SurrogateKind};
use pointexplainer::synth::CohortParams;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub run_dir: PathBuf,
    /// Cohort location; empty means `<run_dir>/cohort`.
    pub data_dir: PathBuf,
    pub schema: Schema,
    pub seed: u64,
    pub height_feature: HeightFeature,
    pub with_color: bool,
    pub window: usize,
    pub step: usize,
    pub alpha: f64,
    pub folds: usize,
    pub point_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
    pub train: TrainConfig,
    pub superpoints: usize,
    pub perturbations: usize,
    pub strategy: Strategy,
    pub explain_kind: SurrogateKind,
    pub surrogates: Vec<SurrogateKind>,
    /// Subjects explained by `verify`; 0 means all.
    pub verify_subjects: usize,
    pub hyper: SurrogateHyper,
    pub smoothing: usize,
    pub bootstrap_resamples: usize,
    pub calibration_bins: usize,
    pub curve_points: usize,
    pub cohort: CohortParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_dir: PathBuf::from("run"),
            data_dir: PathBuf::new(),
            schema: Schema::Canonical,
            seed: 7,
            height_feature: HeightFeature::Velocity,
            with_color: false,
            window: 256,
            step: 28,
            alpha: 0.5,
            folds: 3,
            point_widths: vec![32, 64, 128],
            head_widths: vec![64],
            train: TrainConfig { learning_rate: 1e-3, epochs: 20, ..TrainConfig::default() },
            superpoints: 11,
            perturbations: 200,
            strategy: Strategy::Centroid,
            explain_kind: SurrogateKind::Xgb,
            surrogates: SurrogateKind::ALL.to_vec(),
            verify_subjects: 0,
            hyper: SurrogateHyper::default(),
            smoothing: 15,
            bootstrap_resamples: 1000,
            calibration_bins: 10,
            curve_points: 101,
            cohort: CohortParams::default(),
        }
    }
}

/// Textual form of a config value.
trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn render_value(&self) -> String;
}

macro_rules! via_from_str {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                parse_with_from_str(s)
            }
            fn render_value(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

fn parse_with_from_str<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

via_from_str!(usize, u64, f64, bool, HeightFeature, Strategy, SurrogateKind, Schema);

impl ConfigValue for PathBuf {
    fn parse_value(s: &str) -> Result<Self, String> {
        Ok(PathBuf::from(s))
    }
    fn render_value(&self) -> String {
        self.display().to_string()
    }
}

impl<T: ConfigValue> ConfigValue for Vec<T> {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.split(',').filter(|p| !p.trim().is_empty()).map(|p| T::parse_value(p.trim())).collect()
    }
    fn render_value(&self) -> String {
        self.iter().map(T::render_value).collect::<Vec<_>>().join(",")
    }
}

macro_rules! config_keys {
    ($($key:literal => $($field:ident).+),* $(,)?) => {
        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            /// Sets one key; unknown keys and unparsable values are errors.
            pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
                let bad = |reason: String| CliError::Config(format!("invalid value `{value}` for `{key}`: {reason}"));
                match key {
                    $($key => self.$($field).+ = ConfigValue::parse_value(value).map_err(bad)?,)*
                    _ => return Err(CliError::Config(format!("unknown config key `{key}`"))),
                }
                Ok(())
            }

            /// Every key with its resolved value, in a fixed order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, self.$($field).+.render_value())),*]
            }
        }
    };
}

config_keys! {
    "run_dir" => run_dir,
    "data_dir" => data_dir,
    "schema" => schema,
    "seed" => seed,
    "height_feature" => height_feature,
    "with_color" => with_color,
    "window" => window,
    "step" => step,
    "alpha" => alpha,
    "folds" => folds,
    "point_widths" => point_widths,
    "head_widths" => head_widths,
    "learning_rate" => train.learning_rate,
    "weight_decay" => train.weight_decay,
    "batch_size" => train.batch_size,
    "epochs" => train.epochs,
    "superpoints" => superpoints,
    "perturbations" => perturbations,
    "strategy" => strategy,
    "explain_kind" => explain_kind,
    "surrogates" => surrogates,
    "verify_subjects" => verify_subjects,
    "ridge_lambda" => hyper.ridge_lambda,
    "enet_lambda" => hyper.enet_lambda,
    "enet_rho" => hyper.enet_rho,
    "enet_tol" => hyper.enet_tol,
    "enet_max_sweeps" => hyper.enet_max_sweeps,
    "dt_max_depth" => hyper.dt_max_depth,
    "dt_min_leaf" => hyper.dt_min_leaf,
    "rf_trees" => hyper.rf_trees,
    "rf_max_depth" => hyper.rf_max_depth,
    "rf_min_leaf" => hyper.rf_min_leaf,
    "xgb_rounds" => hyper.xgb_rounds,
    "xgb_max_depth" => hyper.xgb_max_depth,
    "xgb_learning_rate" => hyper.xgb_learning_rate,
    "xgb_lambda" => hyper.xgb_lambda,
    "smoothing" => smoothing,
    "bootstrap_resamples" => bootstrap_resamples,
    "calibration_bins" => calibration_bins,
    "curve_points" => curve_points,
    "cohort.n_pd" => cohort.n_pd,
    "cohort.n_hc" => cohort.n_hc,
    "cohort.points_per_subject" => cohort.points_per_subject,
    "cohort.pitch" => cohort.pitch,
    "cohort.turns" => cohort.turns,
    "cohort.tremor_amplitude" => cohort.tremor_amplitude,
    "cohort.tremor_freq_min" => cohort.tremor_freq_min,
    "cohort.tremor_freq_max" => cohort.tremor_freq_max,
    "cohort.phase_jitter" => cohort.phase_jitter,
    "cohort.micrographia" => cohort.micrographia,
    "cohort.pressure_drift" => cohort.pressure_drift,
    "cohort.pressure_irregularity" => cohort.pressure_irregularity,
    "cohort.position_noise" => cohort.position_noise,
    "cohort.sample_rate" => cohort.sample_rate,
}

impl RunConfig {
    /// Applies `key = value` lines. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<(), CliError> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{pair}` is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = RunConfig::default();
        config.apply_text(&text)?;
        Ok(config)
    }

    /// The resolved configuration as a config file.
    pub fn render(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: &str| Err(CliError::Config(msg.to_string()));
        if self.window == 0 || self.step == 0 {
            return fail("window and step must be positive");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail("alpha must lie in [0, 1]");
        }
        if self.folds < 2 {
            return fail("folds must be at least 2");
        }
        if self.point_widths.is_empty() {
            return fail("point_widths needs at least one layer");
        }
        if self.superpoints == 0 || self.perturbations < 2 {
            return fail("superpoints must be positive and perturbations at least 2");
        }
        if self.surrogates.is_empty() {
            return fail("surrogates must name at least one kind");
        }
        if self.bootstrap_resamples == 0 || self.calibration_bins == 0 || self.curve_points < 2 {
            return fail("bootstrap_resamples, calibration_bins must be positive and curve_points at least 2");
        }
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        if self.data_dir.as_os_str().is_empty() {
            self.run_dir.join("cohort")
        } else {
            self.data_dir.clone()
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            input_channels: if self.with_color { 6 } else { 3 },
            point_widths: self.point_widths.clone(),
            head_widths: self.head_widths.clone(),
            ..ModelConfig::default()
        }
    }

    /// Training settings for fold `fold`.
    pub fn train_config(&self, fold: usize) -> TrainConfig {
        TrainConfig { seed: self.seed.wrapping_add(fold as u64), ..self.train.clone() }
    }

    pub fn explain_settings(&self) -> ExplainSettings {
        ExplainSettings {
            superpoints: self.superpoints,
            perturbations: self.perturbations,
            mask_seed: self.seed,
            surrogate_seed: self.seed,
            hyper: self.hyper.clone(),
        }
    }

    pub fn cohort_params(&self) -> CohortParams {
        CohortParams { seed: self.seed, ..self.cohort.clone() }
    }
}
