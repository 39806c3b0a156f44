//! Defocus blur calibration from circle-grid image pairs.
//!
//! Each pair shows the same pattern pose twice: once with the camera focused
//! on the pattern, once focused at `s1`. The focused image gives the
//! intrinsic blur `gamma`, the defocused one a total blur `lambda` per
//! circle, and `lambda^2 = (kcam |s1 - s2| / s2)^2 + gamma^2` is solved for
//! `kcam` circle by circle before robust aggregation.

mod detect;
mod edge;

pub use detect::{detect_circles, estimate_distances, Detections, DISTANCE_BOUNDS, MIN_RADIUS};
pub use edge::{
    edge_std_from_profile, estimate_gamma, estimate_lambda, slice_estimates, step_edge_factor, EdgeConfig, EdgeModel,
    EdgeProfile, LambdaEstimate, Normalization, DEFAULT_SLICES, DEFAULT_THRESHOLD,
};

use crate::error::{Error, Result};
use crate::psf::defocus_sigma_from_total;
use crate::raster::Image;
use crate::render::PatternSpec;
use crate::stats::{median, quantile_sorted, sorted};

/// One circle as seen in an image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleObservation {
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
    /// Camera to circle-center distance, meters, once known.
    pub distance: Option<f64>,
}

/// `kcam = sqrt(lambda^2 - gamma^2) s2 / |s1 - s2|`.
///
/// Returns `Ok(None)` when `lambda <= gamma`: no defocus was measured and the
/// estimate is discarded.
pub fn solve_kcam(lambda: f64, gamma: f64, s1: f64, s2: f64) -> Result<Option<f64>> {
    for (name, v) in [("s1", s1), ("s2", s2)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be finite and > 0, got {v}")));
        }
    }
    if !(lambda >= 0.0 && gamma >= 0.0) {
        return Err(Error::domain(format!("blur must be >= 0, got lambda={lambda} gamma={gamma}")));
    }
    if s1 == s2 {
        return Err(Error::Unsolvable("pattern is at the focus distance, so there is no defocus".into()));
    }
    let sigma = defocus_sigma_from_total(lambda, gamma);
    if sigma.clamped || sigma.sigma == 0.0 {
        return Ok(None);
    }
    Ok(Some(sigma.sigma * s2 / (s1 - s2).abs()))
}

/// Robust summary of per-circle estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KcamAggregate {
    /// Median of the inliers.
    pub kcam: f64,
    pub inlier_count: usize,
    pub total: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Drops values outside `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]` and takes the median
/// of the rest. Quartiles and extremes describe all estimates.
pub fn aggregate_kcam(estimates: &[f64]) -> Result<KcamAggregate> {
    if estimates.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 kcam estimates, got {}",
            estimates.len()
        )));
    }
    if let Some(bad) = estimates.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain(format!("non-finite kcam estimate {bad}")));
    }
    let s = sorted(estimates);
    let q = |p| quantile_sorted(&s, p).expect("non-empty");
    let (q1, q3) = (q(0.25), q(0.75));
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inliers: Vec<f64> = s.iter().copied().filter(|v| (lo..=hi).contains(v)).collect();
    Ok(KcamAggregate {
        kcam: median(&inliers).expect("the median is always an inlier"),
        inlier_count: inliers.len(),
        total: s.len(),
        min: s[0],
        q1,
        median: q(0.5),
        q3,
        max: s[s.len() - 1],
    })
}

/// Per-circle result of one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KcamEstimate {
    /// Zero-based pair index.
    pub pair: usize,
    /// Row-major circle index within the pair.
    pub circle: usize,
    pub distance: f64,
    pub lambda: f64,
    pub kcam: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub gamma: f64,
    pub estimates: Vec<KcamEstimate>,
    pub summary: KcamAggregate,
    /// Non-fatal findings such as circle-count mismatches.
    pub warnings: Vec<String>,
}

impl CalibrationResult {
    pub fn kcam(&self) -> f64 {
        self.summary.kcam
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    pub edge: EdgeConfig,
    /// Pairs with `|s1 - s2| / s2` below this are rejected as unsolvable.
    pub min_defocus_ratio: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            edge: EdgeConfig::default(),
            min_defocus_ratio: 0.05,
        }
    }
}

/// Focused and defocused images of one pattern pose.
#[derive(Debug, Clone, Copy)]
pub struct ImagePair<'a> {
    pub focused: &'a Image,
    pub defocused: &'a Image,
}

/// Runs detection, distance estimation, pooled `gamma`, per-circle `lambda`
/// and `kcam`, then aggregation. Circles are detected on the focused image
/// and measured at the same positions in the defocused one. Circles whose
/// radius is under twice their blur, and circles with no measurable defocus,
/// contribute no estimate.
pub fn calibrate(
    pairs: &[ImagePair],
    spec: &PatternSpec,
    f_pix: f64,
    s1: f64,
    config: &CalibrationConfig,
) -> Result<CalibrationResult> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no image pairs".into()));
    }
    spec.validate()?;
    config.edge.validate()?;
    if !(s1 > 0.0 && s1.is_finite()) {
        return Err(Error::param("s1", format!("must be > 0, got {s1}")));
    }
    let at = |index: usize| move |e: Error| Error::Pair {
        index,
        source: Box::new(e),
    };

    let mut warnings = Vec::new();
    let mut circles = Vec::with_capacity(pairs.len());
    let mut gamma_slices = Vec::new();
    for (i, pair) in pairs.iter().enumerate() {
        let det = detect_circles(pair.focused, Some(spec));
        if let Some(w) = det.warning {
            warnings.push(format!("pair {i}: {w}"));
        }
        let obs = estimate_distances(&det.circles, spec, f_pix).map_err(at(i))?;
        let s2 = obs[0].distance.expect("filled by estimate_distances");
        let ratio = (s1 - s2).abs() / s2;
        if ratio < config.min_defocus_ratio {
            return Err(at(i)(Error::Unsolvable(format!(
                "pattern at {s2:.3} m is too close to the focus distance {s1} m (defocus ratio {ratio:.4} < {})",
                config.min_defocus_ratio
            ))));
        }
        gamma_slices.extend(slice_estimates(pair.focused, &obs, &config.edge).map_err(at(i))?.into_iter().flatten());
        circles.push(obs);
    }
    let gamma = median(&gamma_slices)
        .ok_or_else(|| Error::Calibration("no usable edge slices in any focused image".into()))?;

    let mut estimates = Vec::new();
    for (i, (pair, obs)) in pairs.iter().zip(&circles).enumerate() {
        let lambdas = estimate_lambda(pair.defocused, obs, &config.edge).map_err(at(i))?;
        let mut unreliable = 0;
        for (j, (est, o)) in lambdas.iter().zip(obs).enumerate() {
            let Some(lambda) = est.lambda else { continue };
            if !est.reliable {
                unreliable += 1;
                continue;
            }
            let distance = o.distance.expect("filled by estimate_distances");
            if let Some(kcam) = solve_kcam(lambda, gamma, s1, distance).map_err(at(i))? {
                estimates.push(KcamEstimate {
                    pair: i,
                    circle: j,
                    distance,
                    lambda,
                    kcam,
                });
            }
        }
        if unreliable > 0 {
            warnings.push(format!("pair {i}: {unreliable} circles too small for their blur were skipped"));
        }
    }
    let values: Vec<f64> = estimates.iter().map(|e| e.kcam).collect();
    let summary = aggregate_kcam(&values)?;
    Ok(CalibrationResult {
        gamma,
        estimates,
        summary,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::BlurModel;
    use crate::render::{render_calibration_pair, PatternView};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn solve_examples() {
        assert_eq!(solve_kcam(5.0, 4.0, 2.0, 1.0).unwrap(), Some(3.0));
        assert_eq!(solve_kcam(2.0, 2.0, 2.0, 1.0).unwrap(), None);
        assert_eq!(solve_kcam(1.0, 2.0, 2.0, 1.0).unwrap(), None);
        assert!(matches!(solve_kcam(5.0, 1.0, 2.0, 2.0), Err(Error::Unsolvable(_))));
    }

    #[test]
    fn solve_is_exact_on_analytic_inputs() {
        for &(kcam, gamma, s1, s2) in &[(8.79f64, 1.0f64, 2.0f64, 1.0f64), (22.67, 0.7, 2.0, 0.8), (3.3, 0.2, 1.5, 4.0)] {
            let sigma: f64 = kcam * (s1 - s2).abs() / s2;
            let lambda = sigma.hypot(gamma);
            let got = solve_kcam(lambda, gamma, s1, s2).unwrap().unwrap();
            assert!((got - kcam).abs() / kcam < 1e-12, "{got} vs {kcam}");
        }
    }

    #[test]
    fn aggregate_examples() {
        let a = aggregate_kcam(&[3.0, 3.0, 3.0, 3.0, 100.0]).unwrap();
        assert_eq!(a.kcam, 3.0);
        assert_eq!(a.inlier_count, 4);
        assert_eq!(a.max, 100.0);
        let b = aggregate_kcam(&[7.5; 6]).unwrap();
        assert_eq!((b.kcam, b.inlier_count), (7.5, 6));
        assert!(matches!(aggregate_kcam(&[1.0, 2.0]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn aggregate_noisy_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(880);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let v: Vec<f64> = (0..880).map(|_| 10.0 + noise.sample(&mut rng)).collect();
        let a = aggregate_kcam(&v).unwrap();
        assert!((a.kcam - 10.0).abs() < 0.2, "{}", a.kcam);
        assert!(a.q1 < a.median && a.median < a.q3 && a.inlier_count <= a.total);
    }

    proptest! {
        #[test]
        fn aggregate_is_permutation_invariant(mut v in prop::collection::vec(0.1f64..50.0, 3..60), seed in any::<u64>()) {
            let a = aggregate_kcam(&v).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..v.len()).rev() {
                v.swap(i, rng.random_range(0..=i));
            }
            prop_assert_eq!(a, aggregate_kcam(&v).unwrap());
        }

        #[test]
        fn aggregate_resists_outliers(seed in any::<u64>(), frac in 0.0f64..=0.2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.3).unwrap();
            let mut v: Vec<f64> = (0..200).map(|_| 10.0 + noise.sample(&mut rng)).collect();
            let clean = aggregate_kcam(&v).unwrap().kcam;
            let n = (frac * v.len() as f64).floor() as usize;
            for x in v.iter_mut().take(n) {
                *x *= 10.0;
            }
            let dirty = aggregate_kcam(&v).unwrap().kcam;
            prop_assert!((dirty - clean).abs() / clean < 0.02, "{} -> {}", clean, dirty);
        }
    }

    fn small_spec() -> PatternSpec {
        PatternSpec {
            rows: 4,
            cols: 2,
            diagonal_spacing: 0.08,
            circle_diameter: 0.04,
            asymmetric: true,
        }
    }

    #[test]
    fn single_pair_pipeline() {
        let spec = small_spec();
        let model = BlurModel::new(8.79, 1.0, 2.0).unwrap();
        let view = PatternView::new(1.0, 2500.0, 700, 900).shifted(0.3, 0.6);
        let pair = render_calibration_pair(&spec, &view, &model).unwrap();
        let r = calibrate(
            &[ImagePair {
                focused: &pair.focused,
                defocused: &pair.defocused,
            }],
            &spec,
            2500.0,
            2.0,
            &CalibrationConfig::default(),
        )
        .unwrap();
        assert_eq!(r.estimates.len(), 8);
        assert!(r.warnings.is_empty(), "{:?}", r.warnings);
        assert!((r.kcam() - 8.79).abs() / 8.79 < 0.1, "{}", r.kcam());
        assert!(r.summary.min <= r.summary.q1 && r.summary.q3 <= r.summary.max);
    }

    #[test]
    fn pattern_at_focus_distance_is_unsolvable() {
        let spec = small_spec();
        let model = BlurModel::new(8.79, 1.0, 1.0).unwrap();
        let view = PatternView::new(1.0, 2500.0, 700, 900);
        let pair = render_calibration_pair(&spec, &view, &model).unwrap();
        let pairs = [ImagePair {
            focused: &pair.focused,
            defocused: &pair.defocused,
        }];
        let err = calibrate(&pairs, &spec, 2500.0, 1.0, &CalibrationConfig::default()).unwrap_err();
        match err {
            Error::Pair { index: 0, source } => assert!(matches!(*source, Error::Unsolvable(_))),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn blank_pair_reports_its_index() {
        let spec = small_spec();
        let model = BlurModel::new(5.0, 1.0, 2.0).unwrap();
        let view = PatternView::new(1.0, 2500.0, 700, 900);
        let pair = render_calibration_pair(&spec, &view, &model).unwrap();
        let blank = Image::filled(700, 900, 1, 1.0).unwrap();
        let pairs = [
            ImagePair {
                focused: &pair.focused,
                defocused: &pair.defocused,
            },
            ImagePair {
                focused: &blank,
                defocused: &blank,
            },
        ];
        let err = calibrate(&pairs, &spec, 2500.0, 2.0, &CalibrationConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Pair { index: 1, .. }), "{err}");
        assert!(calibrate(&[], &spec, 2500.0, 2.0, &CalibrationConfig::default()).is_err());
    }
}
