//! Gaussian point spread functions and separable convolution.
//!
//! [`make_kernel`] builds the discrete analogue of the Gaussian: taps
//! `exp(-t) I_n(t)` with `t = sigma^2` and `I_n` the modified Bessel function
//! of the first kind. Unlike point-sampled Gaussians, these kernels compose
//! exactly: blurring by `a` then `b` equals blurring by `sqrt(a^2 + b^2)`,
//! including at sub-pixel widths. That is the property defocus plus intrinsic
//! blur relies on. [`GaussianKernel::sampled`] keeps the point-sampled variant.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::Image;

/// Below this std (pixels) a kernel is the identity.
pub const IDENTITY_SIGMA: f64 = 0.05;

/// Kernel half-width in units of sigma.
pub const TRUNCATION_SIGMAS: f64 = 4.0;

/// Continuous isotropic 2-D Gaussian with unit mass.
pub fn psf_value(x: f64, y: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::domain(format!("psf sigma must be > 0, got {sigma}")));
    }
    let s2 = sigma * sigma;
    Ok((-(x * x + y * y) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2))
}

/// Separable, normalized Gaussian kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    sigma: f64,
    radius: usize,
    /// One-dimensional factor, `2 * radius + 1` weights summing to 1.
    weights: Vec<f64>,
}

impl GaussianKernel {
    pub fn identity() -> Self {
        GaussianKernel {
            sigma: 0.0,
            radius: 0,
            weights: vec![1.0],
        }
    }

    /// Point-sampled Gaussian, `radius = max(1, ceil(3 sigma))`, renormalized
    /// over the square support.
    pub fn sampled(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::domain(format!("kernel sigma must be >= 0, got {sigma}")));
        }
        if sigma < IDENTITY_SIGMA {
            return Ok(GaussianKernel::identity());
        }
        let radius = ((3.0 * sigma).ceil() as usize).max(1);
        // psf_value(x, y) factors into g(x) g(y); renormalizing the 1-D factor
        // renormalizes the square.
        let raw: Vec<f64> = (-(radius as isize)..=radius as isize)
            .map(|x| psf_value(x as f64, 0.0, sigma))
            .collect::<Result<_>>()?;
        let total: f64 = raw.iter().sum();
        Ok(GaussianKernel {
            sigma,
            radius,
            weights: raw.into_iter().map(|v| v / total).collect(),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights_1d(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_identity(&self) -> bool {
        self.radius == 0
    }

    /// Weight at offset `(dx, dy)` from the center.
    pub fn tap(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius as isize;
        if dx.abs() > r || dy.abs() > r {
            return 0.0;
        }
        self.weights[(dx + r) as usize] * self.weights[(dy + r) as usize]
    }

    /// All `(2r+1)^2` taps, row-major.
    pub fn taps(&self) -> Vec<f64> {
        self.weights
            .iter()
            .flat_map(|wy| self.weights.iter().map(move |wx| wx * wy))
            .collect()
    }
}

/// Discrete-analogue Gaussian kernel for blur std `sigma` (pixels).
pub fn make_kernel(sigma: f64) -> Result<GaussianKernel> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::domain(format!("kernel sigma must be finite and >= 0, got {sigma}")));
    }
    if sigma < IDENTITY_SIGMA {
        return Ok(GaussianKernel::identity());
    }
    let radius = ((TRUNCATION_SIGMAS * sigma).ceil() as usize).max(1);
    let half = scaled_bessel_taps(sigma * sigma, radius);
    let total = half[0] + 2.0 * half[1..].iter().sum::<f64>();
    let weights = (-(radius as isize)..=radius as isize)
        .map(|n| half[n.unsigned_abs()] / total)
        .collect();
    Ok(GaussianKernel { sigma, radius, weights })
}

/// `exp(-t) I_n(t)` for `n = 0..=radius`, by Miller's backward recurrence
/// `I_{n-1} = I_{n+1} + (2n/t) I_n`, normalized with
/// `I_0 + 2 sum_{n>=1} I_n = exp(t)`.
fn scaled_bessel_taps(t: f64, radius: usize) -> Vec<f64> {
    let top = radius + 16 + (10.0 * t.sqrt()).ceil() as usize;
    let mut b = vec![0.0f64; top + 2];
    b[top] = 1.0;
    for n in (1..=top).rev() {
        b[n - 1] = b[n + 1] + (2.0 * n as f64 / t) * b[n];
        if b[n - 1] > 1e200 {
            for v in &mut b[n - 1..] {
                *v *= 1e-200;
            }
        }
    }
    let total = b[0] + 2.0 * b[1..].iter().sum::<f64>();
    b.truncate(radius + 1);
    b.into_iter().map(|v| v / total).collect()
}

/// Std of the Gaussian obtained by cascading blurs `sigma` and `gamma`.
pub fn compose_sigmas(sigma: f64, gamma: f64) -> f64 {
    sigma.hypot(gamma)
}

/// Defocus-only std recovered from a total blur.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefocusSigma {
    pub sigma: f64,
    /// True when `lambda < gamma` forced the result to zero.
    pub clamped: bool,
}

pub fn defocus_sigma_from_total(lambda: f64, gamma: f64) -> DefocusSigma {
    if lambda < gamma {
        DefocusSigma {
            sigma: 0.0,
            clamped: true,
        }
    } else {
        DefocusSigma {
            sigma: ((lambda - gamma) * (lambda + gamma)).sqrt(),
            clamped: false,
        }
    }
}

/// Convolves one `w x h` plane, replicating edge pixels.
pub(crate) fn convolve_plane(src: &[f64], w: usize, h: usize, kernel: &GaussianKernel) -> Vec<f64> {
    debug_assert_eq!(src.len(), w * h);
    if kernel.is_identity() {
        return src.to_vec();
    }
    let r = kernel.radius;
    let wts = &kernel.weights;

    let mut tmp = vec![0.0; w * h];
    tmp.par_chunks_mut(w).zip(src.par_chunks(w)).for_each(|(out, row)| {
        let mut padded = Vec::with_capacity(w + 2 * r);
        padded.extend(std::iter::repeat_n(row[0], r));
        padded.extend_from_slice(row);
        padded.extend(std::iter::repeat_n(row[w - 1], r));
        for (j, &wt) in wts.iter().enumerate() {
            for (o, &p) in out.iter_mut().zip(&padded[j..j + w]) {
                *o += wt * p;
            }
        }
    });

    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, orow)| {
        for (j, &wt) in wts.iter().enumerate() {
            let sy = (y + j).saturating_sub(r).min(h - 1);
            for (o, &p) in orow.iter_mut().zip(&tmp[sy * w..(sy + 1) * w]) {
                *o += wt * p;
            }
        }
    });
    out
}

/// Blurs every channel of `image` with `kernel`.
pub fn convolve(image: &Image, kernel: &GaussianKernel) -> Result<Image> {
    if image.is_empty() {
        return Err(Error::domain("cannot convolve an empty image"));
    }
    if kernel.is_identity() {
        return Ok(image.clone());
    }
    let (w, h) = (image.width(), image.height());
    let planes: Vec<Vec<f32>> = (0..image.channels())
        .map(|c| {
            let plane: Vec<f64> = image.plane(c).into_iter().map(f64::from).collect();
            convolve_plane(&plane, w, h, kernel).into_iter().map(|v| v as f32).collect()
        })
        .collect();
    Ok(Image::from_planes(w, h, &planes))
}

/// Shorthand for `convolve(image, make_kernel(sigma))`.
pub fn blur(image: &Image, sigma: f64) -> Result<Image> {
    convolve(image, &make_kernel(sigma)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Power series `exp(-t) sum_k (t/2)^(2k+n) / (k! (k+n)!)`.
    fn bessel_series(n: usize, t: f64) -> f64 {
        let mut term = (t / 2.0).powi(n as i32) / (1..=n).map(|i| i as f64).product::<f64>();
        let mut sum = 0.0;
        for k in 0..200 {
            sum += term;
            term *= (t / 2.0).powi(2) / (((k + 1) * (k + 1 + n)) as f64);
        }
        (-t).exp() * sum
    }

    fn random_plane(w: usize, h: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..w * h).map(|_| rng.random::<f64>()).collect()
    }

    /// Direct 2-D convolution with clamped indices.
    fn convolve_direct(src: &[f64], w: usize, h: usize, k: &GaussianKernel) -> Vec<f64> {
        let r = k.radius() as isize;
        let mut out = vec![0.0; w * h];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let sx = (x + dx).clamp(0, w as isize - 1) as usize;
                        let sy = (y + dy).clamp(0, h as isize - 1) as usize;
                        acc += k.tap(dx, dy) * src[sy * w + sx];
                    }
                }
                out[y as usize * w + x as usize] = acc;
            }
        }
        out
    }

    #[test]
    fn psf_center_and_symmetry() {
        for sigma in [0.5, 1.0, 2.7] {
            let c = psf_value(0.0, 0.0, sigma).unwrap();
            assert!((c - 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma)).abs() < 1e-15);
            let a = psf_value(1.3, -0.4, sigma).unwrap();
            assert_eq!(a, psf_value(-0.4, 1.3, sigma).unwrap());
            assert_eq!(a, psf_value(-1.3, 0.4, sigma).unwrap());
            assert!(a < c);
        }
        assert!(psf_value(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn psf_integrates_to_one() {
        // trapezoid over +-8 sigma with spacing sigma/50
        for sigma in [0.7, 2.0] {
            let h = sigma / 50.0;
            let n = 800;
            let mut total = 0.0;
            for i in 0..=n {
                for j in 0..=n {
                    let x = -8.0 * sigma + i as f64 * h;
                    let y = -8.0 * sigma + j as f64 * h;
                    let wx = if i == 0 || i == n { 0.5 } else { 1.0 };
                    let wy = if j == 0 || j == n { 0.5 } else { 1.0 };
                    total += wx * wy * psf_value(x, y, sigma).unwrap();
                }
            }
            total *= h * h;
            assert!((total - 1.0).abs() < 1e-4, "{total}");
        }
    }

    #[test]
    fn bessel_taps_match_series() {
        for t in [0.0025, 0.25, 1.0, 4.0, 9.0, 20.0] {
            let taps = scaled_bessel_taps(t, 30);
            for (n, v) in taps.iter().enumerate().take(12) {
                let expected = bessel_series(n, t);
                assert!((v - expected).abs() < 1e-13, "t={t} n={n}: {v} vs {expected}");
            }
        }
        // exp(-1) I_0(1) = 0.4657596075936404, exp(-1) I_1(1) = 0.2079104153497085
        let taps = scaled_bessel_taps(1.0, 4);
        assert!((taps[0] - 0.465_759_607_593_640_4).abs() < 1e-14);
        assert!((taps[1] - 0.207_910_415_349_708_5).abs() < 1e-14);
    }

    #[test]
    fn large_sigma_kernel_is_well_formed() {
        let k = make_kernel(68.0).unwrap();
        assert_eq!(k.radius(), 272);
        let s: f64 = k.weights_1d().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        // discrete analogue approaches the continuous density for wide kernels
        let c = k.weights_1d()[k.radius()];
        let cs = 1.0 / (68.0 * (2.0 * std::f64::consts::PI).sqrt());
        assert!((c - cs).abs() / cs < 1e-3, "{c} vs {cs}");
        let var: f64 = k
            .weights_1d()
            .iter()
            .enumerate()
            .map(|(i, w)| w * (i as f64 - 272.0).powi(2))
            .sum();
        assert!((var.sqrt() - 68.0).abs() < 0.05, "{}", var.sqrt());
    }

    #[test]
    fn identity_kernels() {
        for s in [0.0, 0.01, 0.049] {
            let k = make_kernel(s).unwrap();
            assert!(k.is_identity());
            assert_eq!(k.taps(), vec![1.0]);
        }
        assert!(make_kernel(-1.0).is_err());
        assert!(make_kernel(f64::NAN).is_err());
    }

    #[test]
    fn kernel_invariants() {
        for s in [0.05, 0.3, 0.5, 1.0, 2.0, 3.3, 7.5] {
            let k = make_kernel(s).unwrap();
            let taps = k.taps();
            let n = 2 * k.radius() + 1;
            assert_eq!(taps.len(), n * n);
            assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(taps.iter().all(|&t| t >= 0.0));
            let r = k.radius() as isize;
            for dy in -r..=r {
                for dx in -r..=r {
                    let t = k.tap(dx, dy);
                    assert_eq!(t, k.tap(-dx, dy));
                    assert_eq!(t, k.tap(dx, -dy));
                    assert_eq!(t, k.tap(dy, dx));
                }
            }
        }
        assert_eq!(make_kernel(1.0).unwrap().radius(), 4);
    }

    #[test]
    fn sampled_kernel_matches_renormalized_psf() {
        let k = GaussianKernel::sampled(1.0).unwrap();
        assert_eq!(k.radius(), 3);
        assert_eq!(k.taps().len(), 49);
        assert!((k.taps().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // psf_value(0,0,1) = 1/(2 pi) renormalized over the 7x7 grid
        let raw: f64 = (-3..=3)
            .flat_map(|y| (-3..=3).map(move |x| (x, y)))
            .map(|(x, y)| psf_value(x as f64, y as f64, 1.0).unwrap())
            .sum();
        let expected = psf_value(0.0, 0.0, 1.0).unwrap() / raw;
        assert!((k.tap(0, 0) - expected).abs() < 1e-12);
        assert!((k.tap(0, 0) - 0.1592).abs() < 0.01);
    }

    #[test]
    fn discrete_kernel_center_tap() {
        // (exp(-1) I_0(1))^2 renormalized over the 9x9 support
        let k = make_kernel(1.0).unwrap();
        assert!((k.tap(0, 0) - 0.2169).abs() < 1e-3, "{}", k.tap(0, 0));
    }

    #[test]
    fn compose_and_decompose() {
        assert_eq!(compose_sigmas(3.0, 4.0), 5.0);
        assert_eq!(compose_sigmas(2.5, 0.0), 2.5);
        assert_eq!(compose_sigmas(0.0, 1.5), 1.5);
        assert_eq!(defocus_sigma_from_total(5.0, 4.0), DefocusSigma { sigma: 3.0, clamped: false });
        assert_eq!(defocus_sigma_from_total(4.0, 4.0), DefocusSigma { sigma: 0.0, clamped: false });
        assert_eq!(defocus_sigma_from_total(3.9, 4.0), DefocusSigma { sigma: 0.0, clamped: true });
    }

    proptest! {
        #[test]
        fn compose_inverse(sigma in 0.0f64..50.0, gamma in 0.0f64..10.0) {
            let lambda = compose_sigmas(sigma, gamma);
            prop_assert!(lambda >= sigma.max(gamma));
            let back = defocus_sigma_from_total(lambda, gamma);
            prop_assert!(!back.clamped);
            prop_assert!((back.sigma - sigma).abs() < 1e-9 * (1.0 + sigma));
        }
    }

    #[test]
    fn separable_equals_direct() {
        let (w, h) = (23, 17);
        let src = random_plane(w, h, 7);
        for s in [0.5, 1.3, 2.4] {
            let k = make_kernel(s).unwrap();
            let a = convolve_plane(&src, w, h, &k);
            let b = convolve_direct(&src, w, h, &k);
            let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-9, "{diff}");
        }
    }

    #[test]
    fn identity_convolution_is_bit_exact() {
        let data: Vec<f32> = random_plane(9, 5, 3).into_iter().map(|v| v as f32).collect();
        let img = Image::new(3, 5, 3, data).unwrap();
        let out = convolve(&img, &make_kernel(0.0).unwrap()).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = Image::filled(20, 11, 3, 0.37).unwrap();
        let out = blur(&img, 2.2).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.37).abs() < 1e-6));
    }

    #[test]
    fn impulse_response_is_the_kernel() {
        let mut data = vec![0.0f32; 31 * 31];
        data[15 * 31 + 15] = 1.0;
        let img = Image::gray(31, 31, data).unwrap();
        let k = make_kernel(2.0).unwrap();
        let out = convolve(&img, &k).unwrap();
        for y in 0..31isize {
            for x in 0..31isize {
                let expected = k.tap(x - 15, y - 15) as f32;
                assert!((out.get(x as usize, y as usize, 0) - expected).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn output_stays_in_range_and_preserves_interior_mean() {
        let (w, h) = (96, 80);
        let data: Vec<f32> = random_plane(w, h, 11).into_iter().map(|v| v as f32).collect();
        let img = Image::gray(w, h, data.clone()).unwrap();
        let out = blur(&img, 1.5).unwrap();
        assert!(out.data().iter().all(|v| (-1e-6..=1.0 + 1e-6).contains(v)));
        // mean over an interior window matches the input mean over the same
        // window, up to what leaks across its edges
        let m = 16;
        let mean = |d: &[f32]| {
            let mut s = 0.0f64;
            for y in m..h - m {
                for x in m..w - m {
                    s += f64::from(d[y * w + x]);
                }
            }
            s / ((w - 2 * m) * (h - 2 * m)) as f64
        };
        assert!((mean(out.data()) - mean(&data)).abs() < 5e-3);
        // on a constant-mean periodic pattern the agreement is exact
        let pattern: Vec<f32> = (0..w * h).map(|i| if (i % w + i / w) % 2 == 0 { 0.2 } else { 0.8 }).collect();
        let img = Image::gray(w, h, pattern.clone()).unwrap();
        let out = blur(&img, 1.5).unwrap();
        assert!((mean(out.data()) - mean(&pattern)).abs() < 1e-6);
    }

    #[test]
    fn empty_image_is_rejected() {
        let img = Image::gray(0, 0, vec![]).unwrap();
        assert!(convolve(&img, &make_kernel(1.0).unwrap()).is_err());
    }
}
