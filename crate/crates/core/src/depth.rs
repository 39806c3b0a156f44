//! Depth from blur: per-pixel inversion of the thin-lens blur model,
//! evaluation metrics and kcam sensitivity sweeps.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::optics::{depth_candidates_from_sigma, BlurModel};
use crate::psf::defocus_sigma_from_total;
use crate::raster::{BlurMap, DepthMap};
use crate::stats::pairwise_sum;

/// Metric evaluation range used when none is given, meters.
pub const DEFAULT_RANGE_MAX: f64 = 2.0;

/// Which of the two depths consistent with a blur value to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchPolicy {
    /// Always in front of the focus plane.
    Near,
    /// Always behind it; invalid where no far depth exists.
    Far,
    /// The candidate closest to a reference depth map.
    Oracle,
}

impl FromStr for BranchPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "near" => Ok(BranchPolicy::Near),
            "far" => Ok(BranchPolicy::Far),
            "oracle" => Ok(BranchPolicy::Oracle),
            _ => Err(Error::domain(format!("unknown policy `{s}`; expected near, far or oracle"))),
        }
    }
}

/// Converts a map of total blur `lambda` to depth.
///
/// `gt` is required for [`BranchPolicy::Oracle`] and ignored otherwise.
/// Invalid blur pixels, and oracle pixels without a valid reference, are
/// invalid in the output.
pub fn invert_blur_map(blur: &BlurMap, model: &BlurModel, policy: BranchPolicy, gt: Option<&DepthMap>) -> Result<DepthMap> {
    model.validate()?;
    let reference = match (policy, gt) {
        (BranchPolicy::Oracle, None) => {
            return Err(Error::domain("the oracle policy needs a ground-truth depth map"));
        }
        (BranchPolicy::Oracle, Some(g)) => {
            if !g.same_dims(blur) {
                return Err(dims_error("ground truth", g, "blur", blur));
            }
            Some(g.data())
        }
        _ => None,
    };
    let mut out = Vec::with_capacity(blur.data().len());
    for (i, &lambda) in blur.data().iter().enumerate() {
        if lambda.is_nan() {
            out.push(f64::NAN);
            continue;
        }
        let sigma = defocus_sigma_from_total(lambda, model.gamma).sigma;
        let c = depth_candidates_from_sigma(sigma, model)?;
        out.push(match policy {
            BranchPolicy::Near => c.near,
            BranchPolicy::Far => c.far.unwrap_or(f64::NAN),
            BranchPolicy::Oracle => {
                let g = reference.expect("checked above")[i];
                match c.far {
                    _ if g.is_nan() => f64::NAN,
                    Some(far) if (far - g).abs() < (c.near - g).abs() => far,
                    _ => c.near,
                }
            }
        });
    }
    DepthMap::new(blur.width(), blur.height(), out)
}

fn dims_error(a_name: &str, a: &crate::raster::FloatMap, b_name: &str, b: &crate::raster::FloatMap) -> Error {
    Error::domain(format!(
        "{a_name} is {}x{} but {b_name} is {}x{}",
        a.width(),
        a.height(),
        b.width(),
        b.height()
    ))
}

/// Standard monocular depth error measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthMetrics {
    pub rel: f64,
    pub mse: f64,
    pub rmse: f64,
    pub log10: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    /// Pixels evaluated.
    pub count: usize,
}

/// Scores `pred` against `gt` over pixels where both are valid and the
/// true depth lies in `(0, range_max]`.
///
/// `delta_n` is the fraction with `max(d / p, p / d) < 1.25^n`.
pub fn compute_metrics(pred: &DepthMap, gt: &DepthMap, range_max: f64) -> Result<DepthMetrics> {
    if !pred.same_dims(gt) {
        return Err(dims_error("prediction", pred, "ground truth", gt));
    }
    if !(range_max > 0.0) {
        return Err(Error::param("range_max", format!("must be > 0, got {range_max}")));
    }
    let pairs: Vec<(f64, f64)> = pred
        .data()
        .iter()
        .zip(gt.data())
        .filter(|(p, d)| !p.is_nan() && !d.is_nan() && **d <= range_max)
        .map(|(&p, &d)| (p, d))
        .collect();
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no pixels to evaluate".into()));
    }
    let n = pairs.len() as f64;
    let mean = |f: &dyn Fn(f64, f64) -> f64| pairwise_sum(&pairs.iter().map(|&(p, d)| f(p, d)).collect::<Vec<_>>()) / n;
    let mse = mean(&|p, d| (d - p) * (d - p));
    let delta = |k: i32| mean(&|p, d| if (d / p).max(p / d) < 1.25f64.powi(k) { 1.0 } else { 0.0 });
    Ok(DepthMetrics {
        rel: mean(&|p, d| (d - p).abs() / d),
        mse,
        rmse: mse.sqrt(),
        log10: mean(&|p, d| (d.log10() - p.log10()).abs()),
        delta1: delta(1),
        delta2: delta(2),
        delta3: delta(3),
        count: pairs.len(),
    })
}

/// RMSE of inverted depth for each candidate kcam, all else fixed.
pub fn kcam_sweep(
    blur: &BlurMap,
    gt: &DepthMap,
    model: &BlurModel,
    kcam_values: &[f64],
    policy: BranchPolicy,
    range_max: f64,
) -> Result<Vec<(f64, f64)>> {
    if !blur.same_dims(gt) {
        return Err(dims_error("blur", blur, "ground truth", gt));
    }
    kcam_values
        .iter()
        .map(|&k| {
            let m = model.with_kcam(k);
            m.validate()?;
            let pred = invert_blur_map(blur, &m, policy, Some(gt))?;
            Ok((k, compute_metrics(&pred, gt, range_max)?.rmse))
        })
        .collect()
}
