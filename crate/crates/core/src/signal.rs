//! Recorded pen signals: parsing, kinematic features, and per-patch
//! normalization of point attributes.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::AttributedPoint;

/// One digitizer sample. Coordinates are in tablet units, angles in degrees,
/// timestamps in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub x: f64,
    pub y: f64,
    pub azimuth: f64,
    pub altitude: f64,
    pub pressure: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Pd,
    Hc,
    Unknown,
}

impl Label {
    pub fn is_pd(self) -> bool {
        self == Label::Pd
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Pd => "PD",
            Label::Hc => "HC",
            Label::Unknown => "Unknown",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PD" => Ok(Label::Pd),
            "HC" => Ok(Label::Hc),
            "UNKNOWN" | "" => Ok(Label::Unknown),
            other => Err(Error::invalid(format!("unknown label `{other}`"))),
        }
    }
}

/// An ordered recording of one drawing plus its derived kinematics.
///
/// `radius`, `velocity` and `acceleration` always have one entry per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandDrawnSignal {
    pub samples: Vec<RawSample>,
    pub radius: Vec<f64>,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
    pub subject_id: String,
    pub label: Label,
}

impl HandDrawnSignal {
    /// Builds a signal from samples and fills in the derived features.
    pub fn new(samples: Vec<RawSample>, subject_id: impl Into<String>, label: Label) -> Self {
        derive_kinematics(HandDrawnSignal {
            samples,
            radius: Vec::new(),
            velocity: Vec::new(),
            acceleration: Vec::new(),
            subject_id: subject_id.into(),
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schema {
    /// `x,y,azimuth,altitude,pressure,timestamp`, optional header row.
    Canonical,
    /// `x;y;z;pressure;grip;timestamp;test_id`. `z` and `test_id` are dropped,
    /// the grip angle is read as altitude and azimuth is set to 0.
    SemicolonLegacy,
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schema::Canonical => "canonical",
            Schema::SemicolonLegacy => "semicolon_legacy",
        })
    }
}

impl FromStr for Schema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "canonical" => Ok(Schema::Canonical),
            "semicolon" | "semicolonlegacy" | "semicolon_legacy" | "legacy" => {
                Ok(Schema::SemicolonLegacy)
            }
            other => Err(Error::invalid(format!("unknown schema `{other}`"))),
        }
    }
}

pub const CANONICAL_HEADER: &str = "x,y,azimuth,altitude,pressure,timestamp";

/// Parses one recording. Rows are numbered from 1, counting data rows only.
/// The returned signal has kinematics derived, an empty subject id and an
/// `Unknown` label; [`load_recording`] fills those from the sidecar.
pub fn parse_signal<R: Read>(reader: R, schema: Schema) -> Result<HandDrawnSignal> {
    let (delimiter, columns) = match schema {
        Schema::Canonical => (b',', 6),
        Schema::SemicolonLegacy => (b';', 7),
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut samples: Vec<RawSample> = Vec::new();
    let mut row = 0usize;
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::MalformedRow {
            row: row + 1,
            reason: e.to_string(),
        })?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if line == 0 && record.iter().all(|f| f.parse::<f64>().is_err()) {
            // header row
            continue;
        }
        row += 1;
        if record.len() != columns {
            return Err(Error::MalformedRow {
                row,
                reason: format!("expected {columns} columns, found {}", record.len()),
            });
        }
        let mut values = [0.0f64; 7];
        for (k, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::MalformedRow {
                row,
                reason: format!("column {} is not a number: `{field}`", k + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedRow {
                    row,
                    reason: format!("column {} is not finite", k + 1),
                });
            }
            values[k] = v;
        }
        let sample = match schema {
            Schema::Canonical => RawSample {
                x: values[0],
                y: values[1],
                azimuth: values[2],
                altitude: values[3],
                pressure: values[4],
                timestamp: values[5],
            },
            Schema::SemicolonLegacy => RawSample {
                x: values[0],
                y: values[1],
                azimuth: 0.0,
                altitude: values[4],
                pressure: values[3],
                timestamp: values[5],
            },
        };
        if let Some(prev) = samples.last() {
            if sample.timestamp < prev.timestamp {
                return Err(Error::DecreasingTimestamp { row });
            }
        }
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(Error::EmptyStream);
    }
    Ok(HandDrawnSignal::new(samples, String::new(), Label::Unknown))
}

/// Sidecar metadata: `key=value` lines, `#` comments allowed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Metadata {
    pub subject_id: Option<String>,
    pub label: Option<Label>,
}

pub fn parse_metadata(text: &str) -> Result<Metadata> {
    let mut meta = Metadata::default();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("metadata line without `=`: `{line}`")))?;
        match key.trim() {
            "subject_id" => meta.subject_id = Some(value.trim().to_string()),
            "label" => meta.label = Some(value.parse()?),
            _ => {}
        }
    }
    Ok(meta)
}

pub fn format_metadata(subject_id: &str, label: Label) -> String {
    format!("subject_id={subject_id}\nlabel={label}\n")
}

/// Sidecar path for a recording: same stem, `.meta` extension.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta")
}

/// Reads a recording and its optional sidecar. Without a sidecar the subject
/// id falls back to the file stem and the label to `Unknown`.
pub fn load_recording(csv_path: &Path, schema: Schema) -> Result<HandDrawnSignal> {
    let file = std::fs::File::open(csv_path)?;
    let mut signal = parse_signal(std::io::BufReader::new(file), schema)?;
    let meta_path = sidecar_path(csv_path);
    let meta = if meta_path.exists() {
        parse_metadata(&std::fs::read_to_string(&meta_path)?)?
    } else {
        Metadata::default()
    };
    signal.subject_id = meta.subject_id.unwrap_or_else(|| {
        csv_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    signal.label = meta.label.unwrap_or(Label::Unknown);
    Ok(signal)
}

/// Writes samples in the canonical schema, header included.
pub fn write_canonical<W: std::io::Write>(signal: &HandDrawnSignal, out: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "{CANONICAL_HEADER}")?;
    for s in &signal.samples {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.x, s.y, s.azimuth, s.altitude, s.pressure, s.timestamp
        )?;
    }
    Ok(())
}

/// Recomputes radius, velocity and acceleration from the samples.
///
/// Radius is measured from the first sample. When two samples share a
/// timestamp the previous velocity (and acceleration) is carried forward.
pub fn derive_kinematics(mut signal: HandDrawnSignal) -> HandDrawnSignal {
    let n = signal.samples.len();
    let mut radius = Vec::with_capacity(n);
    let mut velocity = Vec::with_capacity(n);
    let mut acceleration = Vec::with_capacity(n);
    if let Some(origin) = signal.samples.first().copied() {
        radius.push(0.0);
        velocity.push(0.0);
        acceleration.push(0.0);
        for i in 1..n {
            let cur = signal.samples[i];
            let prev = signal.samples[i - 1];
            radius.push((cur.x - origin.x).hypot(cur.y - origin.y));
            let dt = cur.timestamp - prev.timestamp;
            if dt > 0.0 {
                let v = (cur.x - prev.x).hypot(cur.y - prev.y) / dt;
                // velocity[0] is a placeholder, so acceleration starts at sample 2.
                let a = if i == 1 { 0.0 } else { (v - velocity[i - 1]) / dt };
                velocity.push(v);
                acceleration.push(a);
            } else {
                velocity.push(velocity[i - 1]);
                acceleration.push(acceleration[i - 1]);
            }
        }
    }
    signal.radius = radius;
    signal.velocity = velocity;
    signal.acceleration = acceleration;
    signal
}

fn standardize(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= 1e-12 * mean.abs().max(1.0) {
        values.iter_mut().for_each(|v| *v = 0.0);
    } else {
        values.iter_mut().for_each(|v| *v = (*v - mean) / std);
    }
}

/// Centers (x, y) on the centroid and scales them into the unit circle;
/// standardizes every other attribute to mean 0 and variance 1. Constant
/// attributes map to zero, as do coincident coordinates.
pub fn normalize_patch(points: &[AttributedPoint]) -> Vec<AttributedPoint> {
    if points.is_empty() {
        return Vec::new();
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let max_dist = points
        .iter()
        .map(|p| (p.x - cx).hypot(p.y - cy))
        .fold(0.0f64, f64::max);
    let scale = if max_dist > 1e-12 * cx.abs().max(cy.abs()).max(1.0) {
        1.0 / max_dist
    } else {
        0.0
    };

    let mut z: Vec<f64> = points.iter().map(|p| p.z).collect();
    standardize(&mut z);
    let colors = if points.iter().all(|p| p.color.is_some()) {
        let mut channels: Vec<Vec<f64>> = (0..3)
            .map(|c| points.iter().map(|p| p.color.unwrap()[c]).collect())
            .collect();
        channels.iter_mut().for_each(|ch| standardize(ch));
        Some(channels)
    } else {
        None
    };

    points
        .iter()
        .enumerate()
        .map(|(i, p)| AttributedPoint {
            x: (p.x - cx) * scale,
            y: (p.y - cy) * scale,
            z: z[i],
            color: colors
                .as_ref()
                .map(|ch| [ch[0][i], ch[1][i], ch[2][i]]),
        })
        .collect()
}
