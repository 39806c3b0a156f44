//! Thin-lens defocus blur.
//!
//! A scene point at distance `s2` imaged by a lens focused at `s1` spreads into
//! a Gaussian spot whose standard deviation, in output-image pixels, is
//!
//! ```text
//! sigma = kcam * |s1 - s2| / s2
//! kcam  = 1/(s1 - f) * f^2/N * 1/p * out_pix/sensor_pix * 1/kr
//! ```
//!
//! Everything camera specific collapses into `kcam`, so dividing a measured
//! `sigma` by `kcam` yields `|s1 - s2| / s2`, a quantity that no longer depends
//! on the camera. Distances are meters throughout; blur is in output pixels.

use crate::error::{Error, Result};

/// Physical description of a camera, lens and focus setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraParams {
    /// Focal length, meters.
    pub f: f64,
    /// F-number.
    pub n: f64,
    /// Sensor pixel width, meters.
    pub p: f64,
    /// Output image pixel count along one axis.
    pub out_pix: u32,
    /// Sensor pixel count along the same axis.
    pub sensor_pix: u32,
    /// Focus distance, meters.
    pub s1: f64,
    /// Camera constant.
    pub kr: f64,
}

impl CameraParams {
    pub fn validate(&self) -> Result<()> {
        positive_finite("f", self.f)?;
        positive_finite("N", self.n)?;
        positive_finite("p", self.p)?;
        positive_finite("kr", self.kr)?;
        positive_finite("s1", self.s1)?;
        if self.out_pix < 1 {
            return Err(Error::param("out_pix", "must be at least 1"));
        }
        if self.sensor_pix < 1 {
            return Err(Error::param("sensor_pix", "must be at least 1"));
        }
        if self.s1 <= self.f {
            return Err(Error::param(
                "s1",
                format!("focus distance {} m must exceed focal length {} m", self.s1, self.f),
            ));
        }
        Ok(())
    }
}

/// The operative blur description: gain, intrinsic blur and focus distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlurModel {
    /// Blur gain, output pixels.
    pub kcam: f64,
    /// Intrinsic (non-defocus) blur std, output pixels.
    pub gamma: f64,
    /// Focus distance, meters.
    pub s1: f64,
}

impl BlurModel {
    pub fn new(kcam: f64, gamma: f64, s1: f64) -> Result<Self> {
        let model = BlurModel { kcam, gamma, s1 };
        model.validate()?;
        Ok(model)
    }

    pub fn from_camera(params: &CameraParams, gamma: f64) -> Result<Self> {
        BlurModel::new(kcam_from_params(params)?, gamma, params.s1)
    }

    pub fn validate(&self) -> Result<()> {
        positive_finite("kcam", self.kcam)?;
        positive_finite("s1", self.s1)?;
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::param("gamma", format!("must be finite and >= 0, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Same model with a different gain.
    pub fn with_kcam(&self, kcam: f64) -> Self {
        BlurModel { kcam, ..*self }
    }
}

fn positive_finite(field: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(field, format!("must be finite and > 0, got {v}")))
    }
}

/// Blur gain of a camera, in output pixels.
pub fn kcam_from_params(params: &CameraParams) -> Result<f64> {
    params.validate()?;
    let CameraParams {
        f,
        n,
        p,
        out_pix,
        sensor_pix,
        s1,
        kr,
    } = *params;
    Ok(1.0 / (s1 - f) * (f * f / n) * (1.0 / p) * (f64::from(out_pix) / f64::from(sensor_pix)) * (1.0 / kr))
}

/// Camera-independent defocus ratio `|s1 - s2| / s2`.
fn defocus_ratio(s1: f64, s2: f64) -> f64 {
    (s1 - s2).abs() / s2
}

/// Defocus blur std (output pixels) of a point at depth `s2`.
pub fn sigma_from_depth(s2: f64, model: &BlurModel) -> Result<f64> {
    if !(s2 > 0.0) {
        return Err(Error::domain(format!("depth must be > 0, got {s2}")));
    }
    Ok(model.kcam * defocus_ratio(model.s1, s2))
}

/// Divides a defocus blur by the camera gain, giving `|s2 - s1| / s2`.
pub fn normalize_blur(sigma: f64, kcam: f64) -> Result<f64> {
    if !(kcam > 0.0) {
        return Err(Error::domain(format!("kcam must be > 0, got {kcam}")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::domain(format!("sigma must be >= 0, got {sigma}")));
    }
    Ok(sigma / kcam)
}

/// The two depths consistent with one blur value.
///
/// `far` is absent once `sigma >= kcam`: the far branch has its pole there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthCandidates {
    pub near: f64,
    pub far: Option<f64>,
}

pub fn depth_candidates_from_sigma(sigma: f64, model: &BlurModel) -> Result<DepthCandidates> {
    if !(sigma >= 0.0) {
        return Err(Error::domain(format!("sigma must be >= 0, got {sigma}")));
    }
    let r = sigma / model.kcam;
    let near = model.s1 / (1.0 + r);
    let far = (r < 1.0).then(|| model.s1 / (1.0 - r));
    Ok(DepthCandidates { near, far })
}

/// Samples `sigma(s2)` at `n` evenly spaced depths in `[s2_min, s2_max]`.
pub fn blur_curve(model: &BlurModel, s2_min: f64, s2_max: f64, n: usize) -> Result<Vec<(f64, f64)>> {
    if !(s2_min > 0.0 && s2_min < s2_max && s2_max.is_finite()) {
        return Err(Error::domain(format!(
            "need 0 < s2_min < s2_max, got [{s2_min}, {s2_max}]"
        )));
    }
    if n < 2 {
        return Err(Error::domain(format!("need at least 2 samples, got {n}")));
    }
    let step = (s2_max - s2_min) / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let s2 = if i == n - 1 { s2_max } else { s2_min + i as f64 * step };
            Ok((s2, sigma_from_depth(s2, model)?))
        })
        .collect()
}

/// Width of an object at distance `d` that exactly fills a sensor of length `sensor_len`.
pub fn fov_width(sensor_len: f64, f: f64, d: f64) -> Result<f64> {
    for (name, v) in [("sensor length", sensor_len), ("focal length", f), ("distance", d)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be > 0, got {v}")));
        }
    }
    Ok(sensor_len / f * d)
}
