//! Blur std from horizontal intensity slices through dark circles.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::CircleObservation;
use crate::error::{Error, Result};
use crate::raster::Image;
use crate::stats::median;

pub const DEFAULT_THRESHOLD: f64 = 0.95;
pub const DEFAULT_SLICES: usize = 5;

/// Fewest samples required between each circle edge and the window end.
const MIN_EDGE_SAMPLES: usize = 5;

/// Horizontal window half-width cap, in circle radii.
const WINDOW_RADII: f64 = 4.0;

/// Intensities along one horizontal slice, scaled so the maximum is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeProfile {
    samples: Vec<f64>,
}

impl EdgeProfile {
    /// Min-max normalizes `values` to `[0, 1]`.
    pub fn new(values: &[f64]) -> Result<Self> {
        let (lo, hi) = range(values);
        if !(hi > lo) {
            return Err(Error::Calibration("flat profile has no edges".into()));
        }
        Ok(EdgeProfile {
            samples: values.iter().map(|v| (v - lo) / (hi - lo)).collect(),
        })
    }

    /// Profile of a dark circle on a light background: inverted so the
    /// circle interior becomes the flat top.
    pub fn from_dark_slice(values: &[f64]) -> Result<Self> {
        let (lo, hi) = range(values);
        Self::from_dark_slice_in_range(values, lo, hi)
    }

    /// As [`EdgeProfile::from_dark_slice`] but scaled by a fixed intensity
    /// range, e.g. the whole image's; results are clamped to `[0, 1]`.
    pub fn from_dark_slice_in_range(values: &[f64], lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::Calibration("flat profile has no edges".into()));
        }
        Ok(EdgeProfile {
            samples: values.iter().map(|v| ((hi - v) / (hi - lo)).clamp(0.0, 1.0)).collect(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

fn range(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Gaussian std from the integral `J` of the profile's falling edges:
/// `std = J / sqrt(2 pi)`.
///
/// Only the part of the linear interpolant below `threshold` is integrated,
/// by the trapezoid rule with the threshold crossings interpolated, so both
/// edges together contribute one full Gaussian's worth of area.
pub fn edge_std_from_profile(profile: &EdgeProfile, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::param("threshold", format!("must be > 0, got {threshold}")));
    }
    let t = threshold;
    let mut j = 0.0;
    for pair in profile.samples.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        j += match (a < t, b < t) {
            (true, true) => 0.5 * (a + b),
            (true, false) => 0.5 * (t - a) / (b - a) * (a + t),
            (false, true) => 0.5 * (t - b) / (a - b) * (b + t),
            (false, false) => 0.0,
        };
    }
    if !(j > 0.0) {
        return Err(Error::Calibration(format!("degenerate profile: nothing below threshold {t}")));
    }
    Ok(j / (2.0 * std::f64::consts::PI).sqrt())
}

/// How the falling edges of a slice are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeModel {
    /// Edges are blurred steps (error functions). The thresholded integral
    /// is divided by its exact value for a unit-std step edge and each
    /// slice is corrected for the edge's obliquity to the slice direction.
    #[default]
    StepEdge,
    /// Sub-threshold samples are taken as Gaussian tails as-is. Biased
    /// upward by [`step_edge_factor`] on real step edges.
    GaussianTail,
}

/// `edge_std_from_profile` of an ideal step edge blurred with unit std:
/// `2 (z t + phi(z)) / sqrt(2 pi)` with `z = Phi^-1(t)`. About 1.329 at 0.95.
pub fn step_edge_factor(threshold: f64) -> Result<f64> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::param(
            "threshold",
            format!("step-edge model needs a threshold in (0, 1), got {threshold}"),
        ));
    }
    let n = Normal::standard();
    let z = n.inverse_cdf(threshold);
    Ok(2.0 * (z * threshold + n.pdf(z)) / (2.0 * std::f64::consts::PI).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Each slice is scaled by its own minimum and maximum.
    #[default]
    PerSlice,
    /// All slices share the image's intensity range.
    PerImage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeConfig {
    pub threshold: f64,
    /// Slices per circle, odd, spread over the center row +- radius / 2.
    pub slices: usize,
    pub normalization: Normalization,
    pub model: EdgeModel,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        EdgeConfig {
            threshold: DEFAULT_THRESHOLD,
            slices: DEFAULT_SLICES,
            normalization: Normalization::default(),
            model: EdgeModel::default(),
        }
    }
}

impl EdgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.slices % 2 == 0 || !(3..=9).contains(&self.slices) {
            return Err(Error::param("slices", format!("must be odd in 3..=9, got {}", self.slices)));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::param("threshold", format!("must be > 0, got {}", self.threshold)));
        }
        if self.model == EdgeModel::StepEdge {
            step_edge_factor(self.threshold)?;
        }
        Ok(())
    }
}

/// Per-circle slice estimates of the edge std, pixels. A circle whose
/// slices are all unusable gets an empty list.
pub fn slice_estimates(image: &Image, obs: &[CircleObservation], config: &EdgeConfig) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    let factor = match config.model {
        EdgeModel::StepEdge => step_edge_factor(config.threshold)?,
        EdgeModel::GaussianTail => 1.0,
    };
    let gray = image.to_gray();
    let (w, h) = (gray.width(), gray.height());
    let data = gray.data();
    let image_range = range(&data.iter().map(|&v| f64::from(v)).collect::<Vec<_>>());
    let m = (config.slices / 2) as f64;

    let mut out = Vec::with_capacity(obs.len());
    for (i, c) in obs.iter().enumerate() {
        let mut estimates = Vec::with_capacity(config.slices);
        for k in 0..config.slices {
            let row = (c.center_y + (k as f64 - m) * (c.radius / 2.0) / m).round();
            if row < 0.0 || row >= h as f64 {
                continue;
            }
            let dy = row - c.center_y;
            if dy.abs() >= c.radius {
                continue;
            }
            let half_chord = (c.radius * c.radius - dy * dy).sqrt();
            let (left, right) = window(obs, i, row, half_chord, w);
            let (xl, xr) = (left.ceil() as usize, right.floor() as usize);
            let edge_l = c.center_x - half_chord;
            let edge_r = c.center_x + half_chord;
            if (xl as f64) > edge_l - MIN_EDGE_SAMPLES as f64 || (xr as f64) < edge_r + MIN_EDGE_SAMPLES as f64 {
                continue;
            }
            let y = row as usize;
            let values: Vec<f64> = data[y * w + xl..=y * w + xr].iter().map(|&v| f64::from(v)).collect();
            let profile = match config.normalization {
                Normalization::PerSlice => EdgeProfile::from_dark_slice(&values),
                Normalization::PerImage => EdgeProfile::from_dark_slice_in_range(&values, image_range.0, image_range.1),
            };
            let Ok(profile) = profile else { continue };
            let Ok(std) = edge_std_from_profile(&profile, config.threshold) else {
                continue;
            };
            estimates.push(match config.model {
                EdgeModel::StepEdge => std / factor * (half_chord / c.radius),
                EdgeModel::GaussianTail => std,
            });
        }
        out.push(estimates);
    }
    Ok(out)
}

/// Horizontal extent `[left, right]` usable for a slice of circle `i` at
/// `row`: at most [`WINDOW_RADII`] radii from the center, inside the image,
/// and stopping halfway to any other circle crossing the same row.
fn window(obs: &[CircleObservation], i: usize, row: f64, half_chord: f64, w: usize) -> (f64, f64) {
    let c = &obs[i];
    let reach = WINDOW_RADII * c.radius;
    let mut left = (c.center_x - reach).max(0.0);
    let mut right = (c.center_x + reach).min(w as f64 - 1.0);
    for (j, o) in obs.iter().enumerate() {
        let dy = row - o.center_y;
        if j == i || dy.abs() >= o.radius {
            continue;
        }
        let chord = (o.radius * o.radius - dy * dy).sqrt();
        if o.center_x > c.center_x {
            right = right.min(0.5 * (c.center_x + half_chord + o.center_x - chord));
        } else {
            left = left.max(0.5 * (c.center_x - half_chord + o.center_x + chord));
        }
    }
    (left, right)
}

/// Intrinsic blur: median slice estimate over all circles of a focused image.
pub fn estimate_gamma(focused: &Image, obs: &[CircleObservation], config: &EdgeConfig) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::InsufficientData("no circles to measure".into()));
    }
    let all: Vec<f64> = slice_estimates(focused, obs, config)?.into_iter().flatten().collect();
    median(&all).ok_or_else(|| Error::Calibration("every edge slice was degenerate".into()))
}

/// Total blur measured on one circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaEstimate {
    /// Median slice estimate, or `None` when no slice was usable.
    pub lambda: Option<f64>,
    /// False when the radius is under twice the blur, so the two edges
    /// merge and the flat top vanishes.
    pub reliable: bool,
}

/// Per-circle total blur of a defocused image.
pub fn estimate_lambda(defocused: &Image, obs: &[CircleObservation], config: &EdgeConfig) -> Result<Vec<LambdaEstimate>> {
    if obs.is_empty() {
        return Err(Error::InsufficientData("no circles to measure".into()));
    }
    let per_circle = slice_estimates(defocused, obs, config)?;
    let out: Vec<LambdaEstimate> = per_circle
        .iter()
        .zip(obs)
        .map(|(s, c)| {
            let lambda = median(s);
            LambdaEstimate {
                lambda,
                reliable: lambda.is_some_and(|l| c.radius >= 2.0 * l),
            }
        })
        .collect();
    if out.iter().all(|e| e.lambda.is_none()) {
        return Err(Error::Calibration("every edge slice was degenerate".into()));
    }
    Ok(out)
}
