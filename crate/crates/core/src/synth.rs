//! Synthetic Archimedean-spiral cohorts. Healthy drawings follow the template
//! with small positional noise; PD drawings add a radial tremor, progressive
//! shrinking (micrographia) and irregular pen pressure.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{format_metadata, write_canonical, HandDrawnSignal, Label, RawSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortParams {
    pub n_pd: usize,
    pub n_hc: usize,
    pub points_per_subject: usize,
    /// Spiral pitch `b` in `r = b * theta` (tablet units per radian).
    pub pitch: f64,
    pub turns: f64,
    /// Radial tremor amplitude as a fraction of the pitch.
    pub tremor_amplitude: f64,
    /// Each PD subject draws a tremor frequency uniformly from this band (Hz).
    pub tremor_freq_min: f64,
    pub tremor_freq_max: f64,
    /// Standard deviation of the per-sample tremor phase random walk (rad).
    pub phase_jitter: f64,
    /// Fractional radius shrink per turn for PD subjects.
    pub micrographia: f64,
    /// Linear pressure change over the whole drawing (device units).
    pub pressure_drift: f64,
    /// Standard deviation of PD pressure fluctuations (device units).
    pub pressure_irregularity: f64,
    /// White positional noise, as a fraction of the pitch (both classes).
    pub position_noise: f64,
    pub sample_rate: f64,
    pub seed: u64,
}

impl Default for CohortParams {
    fn default() -> Self {
        CohortParams {
            n_pd: 30,
            n_hc: 30,
            points_per_subject: 3000,
            pitch: 4.0,
            turns: 3.0,
            tremor_amplitude: 0.25,
            tremor_freq_min: 4.0,
            tremor_freq_max: 6.0,
            phase_jitter: 0.05,
            micrographia: 0.05,
            pressure_drift: 40.0,
            pressure_irregularity: 25.0,
            position_noise: 0.01,
            sample_rate: 100.0,
            seed: 7,
        }
    }
}

impl CohortParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_pd == 0 || self.n_hc == 0 {
            return Err(Error::invalid("empty class"));
        }
        if self.points_per_subject < 2 {
            return Err(Error::invalid("points_per_subject must be at least 2"));
        }
        let positive = [self.pitch, self.turns, self.sample_rate, self.tremor_freq_min, self.tremor_freq_max];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("pitch, turns, sample rate and tremor band must be positive"));
        }
        if self.tremor_freq_min > self.tremor_freq_max {
            return Err(Error::invalid("tremor band is reversed"));
        }
        let non_negative = [
            self.tremor_amplitude,
            self.phase_jitter,
            self.micrographia,
            self.pressure_irregularity,
            self.position_noise,
        ];
        if non_negative.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("amplitudes, jitter and noise must be non-negative"));
        }
        if !self.pressure_drift.is_finite() {
            return Err(Error::invalid("pressure drift must be finite"));
        }
        if self.micrographia * self.turns >= 1.0 {
            return Err(Error::invalid("micrographia shrinks the spiral to nothing"));
        }
        Ok(())
    }
}

/// `n` points of `r = b * theta`, theta uniform over `[0, 2 pi turns]`.
pub fn spiral_template(pitch: f64, turns: f64, n: usize) -> Result<Vec<(f64, f64)>> {
    if n < 2 {
        return Err(Error::invalid("spiral template needs at least 2 points"));
    }
    Ok(template_angles(turns, n)
        .map(|theta| {
            let r = pitch * theta;
            (r * theta.cos(), r * theta.sin())
        })
        .collect())
}

/// Template angle of sample `i`.
pub fn template_angles(turns: f64, n: usize) -> impl Iterator<Item = f64> {
    let max = TAU * turns;
    (0..n).map(move |i| max * i as f64 / (n - 1) as f64)
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("standard deviation is finite and non-negative")
}

/// One drawing. Deterministic in `(label, params, seed)`.
pub fn simulate_subject(
    label: Label,
    params: &CohortParams,
    subject_id: impl Into<String>,
    seed: u64,
) -> Result<HandDrawnSignal> {
    params.validate()?;
    let pd = match label {
        Label::Pd => true,
        Label::Hc => false,
        Label::Unknown => return Err(Error::invalid("simulated subjects are PD or HC")),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.points_per_subject;
    let dt = 1.0 / params.sample_rate;
    let noise = normal(params.position_noise * params.pitch);
    let jitter = normal(params.phase_jitter);
    let pressure_noise = normal(params.pressure_irregularity);

    let freq = rng.random_range(params.tremor_freq_min..=params.tremor_freq_max);
    let mut phase = rng.random_range(0.0..TAU);
    let pressure_base = rng.random_range(450.0..550.0);
    let pressure_phase = rng.random_range(0.0..TAU);
    let amplitude = params.tremor_amplitude * params.pitch;
    let mut pressure_wander = 0.0;

    let samples = template_angles(params.turns, n)
        .enumerate()
        .map(|(i, theta)| {
            let t = i as f64 * dt;
            let mut r = params.pitch * theta;
            let mut pressure = pressure_base
                + params.pressure_drift * i as f64 / (n - 1) as f64
                + 10.0 * (TAU * 0.25 * t + pressure_phase).sin();
            if pd {
                r *= 1.0 - params.micrographia * theta / TAU;
                r += amplitude * (TAU * freq * t + phase).sin();
                phase += jitter.sample(&mut rng);
                pressure_wander = 0.8 * pressure_wander + pressure_noise.sample(&mut rng);
                pressure += pressure_wander;
            }
            RawSample {
                x: r * theta.cos() + noise.sample(&mut rng),
                y: r * theta.sin() + noise.sample(&mut rng),
                azimuth: 45.0 + 5.0 * (theta / params.turns).sin(),
                altitude: 60.0 + 3.0 * (TAU * 0.1 * t).cos(),
                pressure: pressure.max(0.0),
                timestamp: 1000.0 * t,
            }
        })
        .collect();
    Ok(HandDrawnSignal::new(samples, subject_id, label))
}

/// Subject ids `PD-001, ..., HC-001, ...`.
pub fn subject_id(label: Label, index: usize) -> String {
    format!("{label}-{:03}", index + 1)
}

/// PD subjects first, then HC. Subject `i` draws from stream `i + 1` of the
/// master seed.
pub fn generate_cohort(params: &CohortParams) -> Result<Vec<HandDrawnSignal>> {
    params.validate()?;
    let plan: Vec<(Label, usize)> = (0..params.n_pd)
        .map(|i| (Label::Pd, i))
        .chain((0..params.n_hc).map(|i| (Label::Hc, i)))
        .collect();
    crate::par::map_range(plan.len(), |k| {
        let (label, i) = plan[k];
        let mut master = ChaCha8Rng::seed_from_u64(params.seed);
        master.set_stream(k as u64 + 1);
        simulate_subject(label, params, subject_id(label, i), master.random())
    })
    .into_iter()
    .collect()
}

/// Writes `<id>.csv` in the canonical schema plus a `<id>.meta` sidecar for
/// every signal. Returns the CSV paths.
pub fn write_cohort(signals: &[HandDrawnSignal], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    signals
        .iter()
        .map(|s| {
            let csv = dir.join(format!("{}.csv", s.subject_id));
            write_canonical(s, fs::File::create(&csv)?)?;
            fs::write(crate::signal::sidecar_path(&csv), format_metadata(&s.subject_id, s.label))?;
            Ok(csv)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_geometry() {
        let pts = spiral_template(1.0, 1.0, 5).unwrap();
        assert_eq!(pts[0], (0.0, 0.0));
        let (x, y) = pts[4];
        assert!(((x * x + y * y).sqrt() - TAU).abs() < 1e-12);
        assert!(spiral_template(1.0, 1.0, 1).is_err());
    }

    #[test]
    fn quiet_pd_matches_template() {
        let params = CohortParams {
            tremor_amplitude: 0.0,
            position_noise: 0.0,
            micrographia: 0.0,
            points_per_subject: 200,
            ..CohortParams::default()
        };
        let s = simulate_subject(Label::Pd, &params, "p", 3).unwrap();
        let t = spiral_template(params.pitch, params.turns, 200).unwrap();
        for (a, b) in s.samples.iter().zip(&t) {
            assert!((a.x - b.0).abs() < 1e-12 && (a.y - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn cohort_counts_and_ids() {
        let params = CohortParams { n_pd: 3, n_hc: 2, points_per_subject: 50, ..CohortParams::default() };
        let c = generate_cohort(&params).unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(c.iter().filter(|s| s.label == Label::Pd).count(), 3);
        let mut ids: Vec<_> = c.iter().map(|s| s.subject_id.clone()).collect();
        ids.dedup();
        assert_eq!(ids.len(), 5);
        assert_eq!(c, generate_cohort(&params).unwrap());
        let empty = CohortParams { n_pd: 0, ..params };
        assert_eq!(generate_cohort(&empty).unwrap_err().to_string(), "invalid argument: empty class");
    }
}
