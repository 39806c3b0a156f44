//! Dark-circle detection and pattern-distance estimation.

use super::CircleObservation;
use crate::error::{Error, Result};
use crate::raster::Image;
use crate::render::PatternSpec;
use crate::stats::median;

/// Smallest accepted equivalent radius, pixels.
pub const MIN_RADIUS: f64 = 2.0;

/// Plausible camera to pattern distances, meters.
pub const DISTANCE_BOUNDS: (f64, f64) = (0.05, 100.0);

#[derive(Debug, Clone, PartialEq)]
pub struct Detections {
    pub circles: Vec<CircleObservation>,
    /// Set when an expected pattern was given and the count differs.
    pub warning: Option<String>,
}

/// Finds dark blobs below the mid-range threshold `(min + max) / 2`.
///
/// Each 8-connected component yields its centroid and equivalent radius
/// `sqrt(area / pi)`. Components touching the border or with radius at most
/// [`MIN_RADIUS`] are dropped. Results are ordered row-major.
pub fn detect_circles(image: &Image, expected: Option<&PatternSpec>) -> Detections {
    let gray = image.to_gray();
    let (w, h) = (gray.width(), gray.height());
    let data = gray.data();
    let (lo, hi) = data
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mut circles = Vec::new();
    if w > 0 && h > 0 && hi > lo {
        let threshold = (lo + hi) / 2.0;
        let mask: Vec<bool> = data.iter().map(|&v| v < threshold).collect();
        circles = components(&mask, w, h);
    }
    order_row_major(&mut circles);
    let warning = expected.and_then(|spec| {
        let n = spec.circle_count();
        (circles.len() != n).then(|| format!("expected {n} circles, detected {}", circles.len()))
    });
    Detections { circles, warning }
}

fn components(mask: &[bool], w: usize, h: usize) -> Vec<CircleObservation> {
    let mut seen = vec![false; mask.len()];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut n, mut sx, mut sy) = (0usize, 0.0f64, 0.0f64);
        let mut touches_border = false;
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            n += 1;
            sx += x as f64;
            sy += y as f64;
            touches_border |= x == 0 || y == 0 || x == w - 1 || y == h - 1;
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        let radius = (n as f64 / std::f64::consts::PI).sqrt();
        if !touches_border && radius > MIN_RADIUS {
            out.push(CircleObservation {
                center_x: sx / n as f64,
                center_y: sy / n as f64,
                radius,
                distance: None,
            });
        }
    }
    out
}

/// Sorts by row, then by column. Circles whose centers differ vertically by
/// less than the median radius share a row.
fn order_row_major(circles: &mut [CircleObservation]) {
    if circles.is_empty() {
        return;
    }
    let radii: Vec<f64> = circles.iter().map(|c| c.radius).collect();
    let tol = median(&radii).unwrap_or(0.0);
    circles.sort_by(|a, b| a.center_y.total_cmp(&b.center_y));
    let mut row_start = 0;
    for i in 1..=circles.len() {
        if i == circles.len() || circles[i].center_y - circles[i - 1].center_y >= tol {
            circles[row_start..i].sort_by(|a, b| a.center_x.total_cmp(&b.center_x));
            row_start = i;
        }
    }
}

/// Fronto-parallel pinhole distance from the pattern's known spacing:
/// `f_pix * diagonal_spacing / median nearest-neighbor distance`.
pub fn estimate_distances(obs: &[CircleObservation], spec: &PatternSpec, f_pix: f64) -> Result<Vec<CircleObservation>> {
    if obs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 circles to measure spacing, got {}",
            obs.len()
        )));
    }
    if !(f_pix > 0.0 && f_pix.is_finite()) {
        return Err(Error::param("f_pix", format!("must be > 0, got {f_pix}")));
    }
    let nearest: Vec<f64> = obs
        .iter()
        .enumerate()
        .map(|(i, a)| {
            obs.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| (a.center_x - b.center_x).hypot(a.center_y - b.center_y))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let spacing_px = median(&nearest).expect("non-empty");
    let distance = f_pix * spec.diagonal_spacing / spacing_px;
    let (lo, hi) = DISTANCE_BOUNDS;
    if !(distance > lo && distance < hi) {
        return Err(Error::Calibration(format!(
            "estimated pattern distance {distance:.4} m is outside ({lo}, {hi}) m; check spacing units and f_pix"
        )));
    }
    Ok(obs
        .iter()
        .map(|o| CircleObservation {
            distance: Some(distance),
            ..*o
        })
        .collect())
}
