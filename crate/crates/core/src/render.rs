//! Forward synthesis: blur maps from depth, layered refocusing of RGB-D
//! images, and circle-grid calibration targets.

use std::path::Path;

use crate::calib::CircleObservation;
use crate::config;
use crate::error::{Error, Result};
use crate::optics::{sigma_from_depth, BlurModel};
use crate::psf::{blur, compose_sigmas, convolve_plane, make_kernel};
use crate::raster::{save_blur, save_depth, save_image, BlurMap, DepthMap, Image};

/// Default number of inverse-depth layers used by [`refocus`].
pub const DEFAULT_LAYERS: usize = 16;

/// Blur-equivalent separation `kcam * s1 * |1/s2_a - 1/s2_b|`, pixels, over
/// which a nearer layer goes from blending with a farther one to fully
/// occluding it.
pub const OCCLUSION_RAMP_PX: (f64, f64) = (2.0, 4.0);

/// Supersampling factor per axis for pattern rendering.
pub const SUPERSAMPLE: usize = 4;

/// Per-pixel total blur `sqrt(sigma(s2)^2 + gamma^2)`; invalid depth stays invalid.
pub fn blur_map_from_depth(depth: &DepthMap, model: &BlurModel) -> BlurMap {
    let data = depth
        .data()
        .iter()
        .map(|&d| {
            sigma_from_depth(d, model)
                .map(|s| compose_sigmas(s, model.gamma))
                .unwrap_or(f64::NAN)
        })
        .collect();
    BlurMap::new(depth.width(), depth.height(), data).expect("blur of valid depths is finite and >= 0")
}

/// Synthesizes defocus from an all-in-focus image and its depth map.
///
/// Inverse depth is split over `layers` nodes spanning the observed range,
/// each pixel shared between its two neighboring nodes with linear weights,
/// so planes at the range ends render exactly at their own blur. Each node's
/// premultiplied color and coverage are blurred with the node's total blur
/// and accumulated front to back. A nearer layer attenuates a farther one by
/// its coverage, scaled by a gate that ramps over [`OCCLUSION_RAMP_PX`] of
/// blur-equivalent separation; adjacent slices of one surface therefore
/// blend instead of occluding each other. The result is divided by the
/// accumulated coverage. Pixels with invalid depth join the farthest node.
pub fn refocus(rgb: &Image, depth: &DepthMap, model: &BlurModel, layers: usize) -> Result<Image> {
    let (w, h) = (rgb.width(), rgb.height());
    if depth.width() != w || depth.height() != h {
        return Err(Error::domain(format!(
            "image is {w}x{h} but depth is {}x{}",
            depth.width(),
            depth.height()
        )));
    }
    if layers < 2 {
        return Err(Error::domain(format!("need at least 2 layers, got {layers}")));
    }
    if rgb.is_empty() {
        return Err(Error::domain("cannot refocus an empty image"));
    }
    let inv: Vec<f64> = depth
        .data()
        .iter()
        .map(|&d| if d.is_nan() { f64::NAN } else { 1.0 / d })
        .collect();
    let (lo, hi) = inv
        .iter()
        .filter(|v| !v.is_nan())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return Err(Error::domain("depth map has no valid pixels"));
    }

    // layer k sits at inverse depth lo + k * step; pixels between two layers
    // are shared between them in proportion to proximity
    let nodes = if hi - lo <= 1e-12 * hi { 1 } else { layers };
    let step = if nodes == 1 { 0.0 } else { (hi - lo) / (nodes - 1) as f64 };
    let node_inv = |k: usize| if k + 1 == nodes { hi } else { lo + k as f64 * step };
    let weight = |v: f64, k: usize| -> f64 {
        if v.is_nan() {
            return if k == 0 { 1.0 } else { 0.0 };
        }
        if nodes == 1 {
            return 1.0;
        }
        (1.0 - ((v - lo) / step - k as f64).abs()).max(0.0)
    };
    let channels = rgb.channels();
    let planes: Vec<Vec<f64>> = (0..channels)
        .map(|c| rgb.plane(c).into_iter().map(f64::from).collect())
        .collect();

    let (ramp_lo, ramp_hi) = OCCLUSION_RAMP_PX;
    let gate = |d: f64| ((d - ramp_lo) / (ramp_hi - ramp_lo)).clamp(0.0, 1.0);
    let mut acc_color = vec![vec![0.0f64; w * h]; channels];
    let mut acc_alpha = vec![0.0f64; w * h];
    let mut nearer: Vec<(usize, Vec<f64>)> = Vec::new();
    for k in (0..nodes).rev() {
        let mask: Vec<f64> = inv.iter().map(|&v| weight(v, k)).collect();
        if mask.iter().all(|&m| m == 0.0) {
            continue;
        }
        let sigma = sigma_from_depth(1.0 / node_inv(k), model)?;
        let kernel = make_kernel(compose_sigmas(sigma, model.gamma))?;
        let alpha = convolve_plane(&mask, w, h, &kernel);
        let mut vis = vec![1.0f64; w * h];
        for (j, a) in &nearer {
            let g = gate(model.kcam * model.s1 * (node_inv(*j) - node_inv(k)));
            if g > 0.0 {
                for (t, a) in vis.iter_mut().zip(a) {
                    *t *= 1.0 - g * a;
                }
            }
        }
        for (c, plane) in planes.iter().enumerate() {
            let premul: Vec<f64> = plane.iter().zip(&mask).map(|(v, m)| v * m).collect();
            let color = convolve_plane(&premul, w, h, &kernel);
            for ((acc, col), t) in acc_color[c].iter_mut().zip(&color).zip(&vis) {
                *acc += col * t;
            }
        }
        for ((acc, a), t) in acc_alpha.iter_mut().zip(&alpha).zip(&vis) {
            *acc += a * t;
        }
        nearer.push((k, alpha));
    }

    let out: Vec<Vec<f32>> = acc_color
        .iter()
        .enumerate()
        .map(|(c, plane)| {
            plane
                .iter()
                .zip(&acc_alpha)
                .enumerate()
                .map(|(i, (v, a))| if *a > 1e-12 { (v / a) as f32 } else { planes[c][i] as f32 })
                .collect()
        })
        .collect();
    Ok(Image::from_planes(w, h, &out))
}

/// Writes `<stem>.png`, `<stem>_depth.pfm`, `<stem>_blur.pfm` and `meta.txt`
/// into `dir`.
pub fn write_dataset_sample(
    dir: impl AsRef<Path>,
    stem: &str,
    rgb: &Image,
    depth: &DepthMap,
    model: &BlurModel,
    layers: usize,
) -> Result<()> {
    let dir = dir.as_ref();
    let blurred = refocus(rgb, depth, model, layers)?;
    save_image(&blurred, dir.join(format!("{stem}.png")))?;
    save_depth(depth, dir.join(format!("{stem}_depth.pfm")))?;
    save_blur(&blur_map_from_depth(depth, model), dir.join(format!("{stem}_blur.pfm")))?;
    let meta = dir.join("meta.txt");
    std::fs::write(&meta, config::format_model(model)).map_err(|source| Error::File { path: meta, source })
}

/// Circle-grid calibration target.
///
/// In an asymmetric grid, row `i` column `j` sits at `((2j + i % 2) a, i a)`
/// with `a = diagonal_spacing / sqrt(2)`, so nearest neighbors are diagonal
/// and `diagonal_spacing` apart. A symmetric grid places circles on a square
/// lattice of pitch `diagonal_spacing`. Lengths are meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternSpec {
    pub rows: usize,
    pub cols: usize,
    pub diagonal_spacing: f64,
    pub circle_diameter: f64,
    pub asymmetric: bool,
}

impl Default for PatternSpec {
    /// 11 rows of 4 circles, 4 cm diameter.
    fn default() -> Self {
        PatternSpec {
            rows: 11,
            cols: 4,
            diagonal_spacing: 0.08,
            circle_diameter: 0.04,
            asymmetric: true,
        }
    }
}

impl PatternSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::param("rows/cols", format!("need at least 2x2, got {}x{}", self.rows, self.cols)));
        }
        if !(self.circle_diameter > 0.0 && self.diagonal_spacing.is_finite()) {
            return Err(Error::param("circle_diameter", "must be > 0"));
        }
        if !(self.circle_diameter < self.diagonal_spacing) {
            return Err(Error::param(
                "diagonal_spacing",
                format!(
                    "spacing {} m must exceed diameter {} m",
                    self.diagonal_spacing, self.circle_diameter
                ),
            ));
        }
        Ok(())
    }

    pub fn circle_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Circle centers in meters, row-major, relative to the first circle.
    pub fn centers(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.circle_count());
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.push(if self.asymmetric {
                    let a = self.diagonal_spacing / std::f64::consts::SQRT_2;
                    ((2 * j + i % 2) as f64 * a, i as f64 * a)
                } else {
                    (j as f64 * self.diagonal_spacing, i as f64 * self.diagonal_spacing)
                });
            }
        }
        out
    }
}

/// How a fronto-parallel pattern is imaged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternView {
    /// Camera to pattern distance, meters.
    pub distance: f64,
    /// Focal length, pixels.
    pub f_pix: f64,
    pub width: usize,
    pub height: usize,
    /// Shift of the pattern center from the image center, pixels.
    pub offset: (f64, f64),
}

impl PatternView {
    pub fn new(distance: f64, f_pix: f64, width: usize, height: usize) -> Self {
        PatternView {
            distance,
            f_pix,
            width,
            height,
            offset: (0.0, 0.0),
        }
    }

    pub fn shifted(self, dx: f64, dy: f64) -> Self {
        PatternView {
            offset: (self.offset.0 + dx, self.offset.1 + dy),
            ..self
        }
    }

    /// Pixels per meter on the pattern plane.
    pub fn scale(&self) -> f64 {
        self.f_pix / self.distance
    }
}

/// Projects the pattern; checks that every circle lands inside the image.
fn project(spec: &PatternSpec, view: &PatternView) -> Result<Vec<CircleObservation>> {
    spec.validate()?;
    if !(view.distance > 0.0 && view.f_pix > 0.0) {
        return Err(Error::domain("distance and focal length must be > 0"));
    }
    let centers = spec.centers();
    let (max_x, max_y) = centers.iter().fold((0.0f64, 0.0f64), |(a, b), &(x, y)| (a.max(x), b.max(y)));
    let s = view.scale();
    let radius = spec.circle_diameter / 2.0 * s;
    let cx0 = (view.width as f64 - 1.0) / 2.0 + view.offset.0 - max_x / 2.0 * s;
    let cy0 = (view.height as f64 - 1.0) / 2.0 + view.offset.1 - max_y / 2.0 * s;
    let obs: Vec<CircleObservation> = centers
        .iter()
        .map(|&(x, y)| CircleObservation {
            center_x: cx0 + x * s,
            center_y: cy0 + y * s,
            radius,
            distance: Some(view.distance),
        })
        .collect();
    let fits = obs.iter().all(|c| {
        c.center_x - c.radius >= 1.0
            && c.center_y - c.radius >= 1.0
            && c.center_x + c.radius <= view.width as f64 - 2.0
            && c.center_y + c.radius <= view.height as f64 - 2.0
    });
    if !fits {
        let need_w = (max_x * s + 2.0 * radius + 3.0 + 2.0 * view.offset.0.abs()).ceil();
        let need_h = (max_y * s + 2.0 * radius + 3.0 + 2.0 * view.offset.1.abs()).ceil();
        return Err(Error::domain(format!(
            "pattern does not fit in {}x{}; needs at least {}x{} pixels",
            view.width, view.height, need_w, need_h
        )));
    }
    Ok(obs)
}

/// Renders dark circles (0) on a light background (1), antialiased by
/// `SUPERSAMPLE x SUPERSAMPLE` point sampling per pixel. Returns the image and
/// the ground-truth circle geometry.
pub fn render_pattern(spec: &PatternSpec, view: &PatternView) -> Result<(Image, Vec<CircleObservation>)> {
    let obs = project(spec, view)?;
    let (w, h) = (view.width, view.height);
    let mut data = vec![1.0f32; w * h];
    let sub: Vec<f64> = (0..SUPERSAMPLE)
        .map(|k| (k as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5)
        .collect();
    let samples = (SUPERSAMPLE * SUPERSAMPLE) as f32;
    for c in &obs {
        let r = c.radius;
        let x0 = (c.center_x - r - 1.0).floor().max(0.0) as usize;
        let x1 = ((c.center_x + r + 1.0).ceil() as usize).min(w - 1);
        let y0 = (c.center_y - r - 1.0).floor().max(0.0) as usize;
        let y1 = ((c.center_y + r + 1.0).ceil() as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 - c.center_x;
                let dy = y as f64 - c.center_y;
                let d = dx.hypot(dy);
                let coverage = if d <= r - 0.75 {
                    1.0
                } else if d >= r + 0.75 {
                    0.0
                } else {
                    let inside = sub
                        .iter()
                        .flat_map(|sy| sub.iter().map(move |sx| (dx + sx).hypot(dy + sy)))
                        .filter(|&dd| dd <= r)
                        .count();
                    inside as f32 / samples
                };
                let px = &mut data[y * w + x];
                *px = (*px - coverage).max(0.0);
            }
        }
    }
    Ok((Image::gray(w, h, data)?, obs))
}

/// A focused/defocused image pair of the same pattern pose.
#[derive(Debug, Clone)]
pub struct CalibrationPair {
    pub focused: Image,
    pub defocused: Image,
    pub truth: Vec<CircleObservation>,
    /// Total blur std applied to the defocused image, pixels.
    pub lambda: f64,
}

/// Focused image carries only the intrinsic blur `gamma`; the defocused image
/// carries `sqrt(sigma(distance)^2 + gamma^2)`.
pub fn render_calibration_pair(spec: &PatternSpec, view: &PatternView, model: &BlurModel) -> Result<CalibrationPair> {
    let (sharp, truth) = render_pattern(spec, view)?;
    let sigma = sigma_from_depth(view.distance, model)?;
    let lambda = compose_sigmas(sigma, model.gamma);
    let focused = blur(&sharp, model.gamma)?;
    let defocused = blur(&sharp, lambda)?;
    Ok(CalibrationPair {
        focused,
        defocused,
        truth,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_plane_depth(w: usize, h: usize, near: f64, far: f64) -> DepthMap {
        let data = (0..w * h).map(|i| if i % w < w / 2 { near } else { far }).collect();
        DepthMap::new(w, h, data).unwrap()
    }

    fn texture(w: usize, h: usize, channels: usize) -> Image {
        let mut data = Vec::with_capacity(w * h * channels);
        for y in 0..h {
            for x in 0..w {
                for c in 0..channels {
                    let v = 0.5
                        + 0.25 * ((x as f32 * 0.9 + c as f32).sin() * (y as f32 * 0.7).cos())
                        + 0.2 * ((x * 7 + y * 13 + c * 5) % 11) as f32 / 11.0
                        - 0.1;
                    data.push(v.clamp(0.0, 1.0));
                }
            }
        }
        Image::new(w, h, channels, data).unwrap()
    }

    #[test]
    fn blur_map_examples() {
        let m = BlurModel::new(10.0, 1.0, 2.0).unwrap();
        let at_focus = blur_map_from_depth(&DepthMap::constant(4, 3, 2.0).unwrap(), &m);
        assert!(at_focus.data().iter().all(|&v| v == 1.0));

        let m0 = BlurModel::new(10.0, 0.0, 2.0).unwrap();
        let flat = blur_map_from_depth(&DepthMap::constant(4, 3, 3.0).unwrap(), &m0);
        let expected = sigma_from_depth(3.0, &m0).unwrap();
        assert!(flat.data().iter().all(|&v| v == expected));

        let planes = blur_map_from_depth(&two_plane_depth(6, 2, 1.0, 4.0), &m);
        assert!((planes.get(0, 0).unwrap() - 101f64.sqrt()).abs() < 1e-12);
        assert!((planes.get(5, 1).unwrap() - 26f64.sqrt()).abs() < 1e-12);
        assert!((101f64.sqrt() - 10.0499).abs() < 1e-4 && (26f64.sqrt() - 5.0990).abs() < 1e-4);

        let holes = DepthMap::new(2, 1, vec![1.0, f64::NAN]).unwrap();
        let b = blur_map_from_depth(&holes, &m);
        assert!(b.get(0, 0).is_some() && b.get(1, 0).is_none());
    }

    #[test]
    fn blur_grows_with_defocus_ratio() {
        let m = BlurModel::new(7.0, 0.5, 2.0).unwrap();
        let depths = [0.4f64, 0.8, 1.2, 1.9, 2.1, 3.0, 6.0, 40.0];
        let map = blur_map_from_depth(&DepthMap::new(depths.len(), 1, depths.to_vec()).unwrap(), &m);
        for i in 0..depths.len() {
            for j in 0..depths.len() {
                let same_side = (depths[i] < 2.0) == (depths[j] < 2.0);
                let ri = (2.0 - depths[i]).abs() / depths[i];
                let rj = (2.0 - depths[j]).abs() / depths[j];
                if same_side && ri < rj {
                    assert!(map.data()[i] < map.data()[j]);
                }
            }
        }
    }

    #[test]
    fn refocus_at_focus_is_identity() {
        let img = texture(24, 16, 3);
        let m = BlurModel::new(10.0, 0.0, 2.0).unwrap();
        let out = refocus(&img, &DepthMap::constant(24, 16, 2.0).unwrap(), &m, 16).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn refocus_constant_depth_matches_global_blur() {
        let img = texture(40, 30, 3);
        let m = BlurModel::new(8.79, 0.7, 2.0).unwrap();
        let out = refocus(&img, &DepthMap::constant(40, 30, 1.3).unwrap(), &m, 16).unwrap();
        let lambda = compose_sigmas(sigma_from_depth(1.3, &m).unwrap(), 0.7);
        let direct = blur(&img, lambda).unwrap();
        let diff = out
            .data()
            .iter()
            .zip(direct.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(diff < 1e-4, "{diff}");
    }

    #[test]
    fn refocus_blurs_the_out_of_focus_plane() {
        let (w, h) = (64, 32);
        let img = texture(w, h, 1);
        let depth = two_plane_depth(w, h, 1.0, 3.0);
        let m = BlurModel::new(12.0, 0.0, 1.0).unwrap();
        let out = refocus(&img, &depth, &m, DEFAULT_LAYERS).unwrap();
        let variance = |im: &Image, x0: usize, x1: usize| {
            let vals: Vec<f64> = (8..h - 8)
                .flat_map(|y| (x0..x1).map(move |x| (x, y)))
                .map(|(x, y)| f64::from(im.get(x, y, 0)))
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64
        };
        // far plane occupies the right half
        let before = variance(&img, w / 2 + 12, w - 4);
        let after = variance(&out, w / 2 + 12, w - 4);
        assert!(after < 0.5 * before, "{before} -> {after}");
        // the focused near plane is untouched away from the boundary
        for y in 0..h {
            for x in 0..w / 2 - 12 {
                assert!((out.get(x, y, 0) - img.get(x, y, 0)).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn refocus_rejects_bad_inputs() {
        let img = texture(8, 8, 1);
        let m = BlurModel::new(5.0, 0.0, 2.0).unwrap();
        assert!(refocus(&img, &DepthMap::constant(8, 7, 1.0).unwrap(), &m, 16).is_err());
        assert!(refocus(&img, &DepthMap::constant(8, 8, 1.0).unwrap(), &m, 1).is_err());
        let all_invalid = DepthMap::new(8, 8, vec![f64::NAN; 64]).unwrap();
        assert!(refocus(&img, &all_invalid, &m, 4).is_err());
    }

    fn ramp_depth(w: usize, h: usize) -> DepthMap {
        let data = (0..w * h)
            .map(|i| 0.8 + 0.8 * (i % w) as f64 / (w - 1) as f64 + 0.1 * (0.05 * (i / w) as f64).sin())
            .collect();
        DepthMap::new(w, h, data).unwrap()
    }

    #[test]
    fn refocus_preserves_interior_mean() {
        let (w, h) = (96, 72);
        let img = texture(w, h, 3);
        let m = BlurModel::new(8.79, 1.0, 2.0).unwrap();
        let out = refocus(&img, &ramp_depth(w, h), &m, DEFAULT_LAYERS).unwrap();
        let mean = |im: &Image| {
            let vals: Vec<f64> = (16..h - 16)
                .flat_map(|y| (16..w - 16).map(move |x| (x, y)))
                .map(|(x, y)| f64::from(im.get(x, y, 1)))
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        assert!((mean(&out) - mean(&img)).abs() < 1e-2);
    }

    #[test]
    fn refocus_converges_with_layer_count() {
        let (w, h) = (80, 60);
        let img = texture(w, h, 3);
        let depth = ramp_depth(w, h);
        let m = BlurModel::new(8.79, 1.0, 2.0).unwrap();
        let a = refocus(&img, &depth, &m, 16).unwrap();
        let b = refocus(&img, &depth, &m, 32).unwrap();
        let diff = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
        assert!(diff < 5e-3, "{diff}");
    }

    #[test]
    fn pattern_geometry() {
        let spec = PatternSpec::default();
        assert_eq!(spec.circle_count(), 44);
        let view = PatternView::new(1.0, 1000.0, 600, 900);
        let (img, obs) = render_pattern(&spec, &view).unwrap();
        assert_eq!(obs.len(), 44);
        assert!(obs.iter().all(|o| (o.radius - 20.0).abs() < 1e-12));
        assert!(obs.iter().all(|o| o.distance == Some(1.0)));
        // center dark, background light
        let o = &obs[0];
        assert_eq!(img.get(o.center_x.round() as usize, o.center_y.round() as usize, 0), 0.0);
        assert_eq!(img.get(1, 1, 0), 1.0);
        // nearest-neighbor spacing equals the diagonal spacing
        let d = ((obs[4].center_x - obs[0].center_x).powi(2) + (obs[4].center_y - obs[0].center_y).powi(2)).sqrt();
        assert!((d - 80.0).abs() < 1e-9);

        let far = PatternView::new(2.0, 1000.0, 600, 900);
        let (_, obs2) = render_pattern(&spec, &far).unwrap();
        assert!((obs2[0].radius - 10.0).abs() < 1e-12);
    }

    #[test]
    fn pattern_area_matches_disk_area() {
        let spec = PatternSpec {
            rows: 2,
            cols: 2,
            diagonal_spacing: 0.1,
            circle_diameter: 0.04,
            asymmetric: false,
        };
        let view = PatternView::new(1.0, 1000.0, 200, 200).shifted(0.3, -0.2);
        let (img, obs) = render_pattern(&spec, &view).unwrap();
        let dark: f64 = img.data().iter().map(|&v| 1.0 - f64::from(v)).sum();
        let expected = obs.len() as f64 * std::f64::consts::PI * 400.0;
        assert!((dark - expected).abs() / expected < 2e-3, "{dark} vs {expected}");
    }

    #[test]
    fn pattern_overflow_reports_required_size() {
        let spec = PatternSpec::default();
        let err = render_pattern(&spec, &PatternView::new(1.0, 1000.0, 200, 200)).unwrap_err();
        assert!(err.to_string().contains("needs at least"), "{err}");
    }

    #[test]
    fn calibration_pair_blur_levels() {
        let spec = PatternSpec {
            rows: 2,
            cols: 2,
            diagonal_spacing: 0.1,
            circle_diameter: 0.04,
            asymmetric: true,
        };
        let view = PatternView::new(1.0, 1000.0, 260, 200);
        let sharp = render_pattern(&spec, &view).unwrap().0;

        let no_gamma = BlurModel::new(5.0, 0.0, 2.0).unwrap();
        let pair = render_calibration_pair(&spec, &view, &no_gamma).unwrap();
        assert_eq!(pair.focused, sharp);

        let in_focus = BlurModel::new(5.0, 1.0, 1.0).unwrap();
        let pair = render_calibration_pair(&spec, &view, &in_focus).unwrap();
        assert_eq!(pair.focused, pair.defocused);

        let m = BlurModel::new(12.69, 1.0, 2.0).unwrap();
        let pair = render_calibration_pair(&spec, &view, &m).unwrap();
        assert!((pair.lambda - 12.729).abs() < 1e-3);
        assert_eq!(pair.defocused, blur(&sharp, pair.lambda).unwrap());
    }

    #[test]
    fn dataset_sample_files() {
        let dir = tempfile::tempdir().unwrap();
        let img = texture(16, 12, 3);
        let depth = two_plane_depth(16, 12, 1.0, 1.5);
        let m = BlurModel::new(3.0, 0.5, 2.0).unwrap();
        write_dataset_sample(dir.path(), "frame0", &img, &depth, &m, 4).unwrap();
        for f in ["frame0.png", "frame0_depth.pfm", "frame0_blur.pfm", "meta.txt"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let meta = config::load_model(dir.path().join("meta.txt")).unwrap();
        assert_eq!(meta, m);
        let blur_file = std::fs::read(dir.path().join("frame0_blur.pfm")).unwrap();
        assert!(blur_file.starts_with(b"Pf\n# blurmap px\n"));
    }
}
