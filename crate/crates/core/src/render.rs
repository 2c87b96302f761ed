//! SVG attribution maps: the drawing's trajectory as a polyline whose color
//! follows the smoothed per-point attribution on a diverging colormap.

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const DEFAULT_SMOOTHING: usize = 15;
const CANVAS: f64 = 512.0;
const MARGIN: f64 = 16.0;

const NEGATIVE: [f64; 3] = [59.0, 76.0, 192.0];
const NEUTRAL: [f64; 3] = [221.0, 221.0, 221.0];
const POSITIVE: [f64; 3] = [180.0, 4.0, 38.0];

/// Centered moving average; near the ends the window shrinks to the points
/// that exist. A window of 0 or 1 returns the input.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 {
        return values.to_vec();
    }
    let half = window / 2;
    let mut prefix = Vec::with_capacity(values.len() + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + window - half).min(values.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Maps `t` in [-1, 1] to blue (negative), light gray (0) or red (positive).
pub fn diverging_color(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(-1.0, 1.0) } else { 0.0 };
    let (end, f) = if t < 0.0 { (NEGATIVE, -t) } else { (POSITIVE, t) };
    let mut rgb = [0u8; 3];
    for c in 0..3 {
        rgb[c] = (NEUTRAL[c] + (end[c] - NEUTRAL[c]) * f).round() as u8;
    }
    rgb
}

fn hex(rgb: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2])
}

/// Renders the trajectory `xy` colored by `per_point` attributions. Colors
/// span `±max|w|` of the raw attributions; runs of equal color share one
/// polyline.
pub fn render_svg(xy: &[(f64, f64)], per_point: &[f64], smoothing: usize, title: &str) -> Result<String> {
    if xy.len() != per_point.len() {
        return Err(Error::LengthMismatch { expected: xy.len(), got: per_point.len() });
    }
    if xy.len() < 2 {
        return Err(Error::invalid("rendering needs at least two points"));
    }
    let scale_w = per_point.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let smooth = moving_average(per_point, smoothing);
    let colors: Vec<String> = smooth
        .iter()
        .map(|w| hex(diverging_color(if scale_w > 0.0 { w / scale_w } else { 0.0 })))
        .collect();

    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in xy {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let span = (x1 - x0).max(y1 - y0);
    let k = if span > 0.0 { (CANVAS - 2.0 * MARGIN) / span } else { 1.0 };
    let px = |(x, y): (f64, f64)| (MARGIN + (x - x0) * k, CANVAS - MARGIN - (y - y0) * k);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" height="{CANVAS}" viewBox="0 0 {CANVAS} {CANVAS}">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(out, r#"<g fill="none" stroke-width="2" stroke-linecap="round" stroke-linejoin="round">"#);
    let mut start = 0;
    // Segment i joins points i and i + 1 and takes the color of point i.
    for i in 1..xy.len() {
        let run_ends = i == xy.len() - 1 || colors[i] != colors[start];
        if !run_ends {
            continue;
        }
        let mut pts = String::new();
        for (j, &p) in xy[start..=i].iter().enumerate() {
            let (x, y) = px(p);
            if j > 0 {
                pts.push(' ');
            }
            let _ = write!(pts, "{x:.2},{y:.2}");
        }
        let _ = writeln!(out, r#"<polyline stroke="{}" points="{pts}"/>"#, colors[start]);
        start = i;
    }
    out.push_str("</g>\n</svg>\n");
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
