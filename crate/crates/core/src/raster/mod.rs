//! Raster types and file I/O.
//!
//! Images hold intensities in `[0, 1]`, one or three interleaved channels.
//! Depth and blur maps are single-channel float fields where NaN marks an
//! invalid pixel.

mod pfm;
mod pnm;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub use pfm::{decode_pfm, encode_pfm, FloatMapHeader};
pub use pnm::{decode_pnm, encode_pnm};

/// Luma weights used for RGB to grayscale conversion.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

/// Row-major image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::domain(format!("images have 1 or 3 channels, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::domain(format!(
                "{}x{}x{} image needs {} values, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn gray(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        Image::new(width, height, 1, data)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Image::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds an image from values that may drift slightly outside `[0, 1]`
    /// through rounding; they are clamped.
    pub(crate) fn from_clamped(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Image {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// One channel as a contiguous plane.
    pub fn plane(&self, c: usize) -> Vec<f32> {
        assert!(c < self.channels);
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    pub(crate) fn from_planes(width: usize, height: usize, planes: &[Vec<f32>]) -> Self {
        let channels = planes.len();
        let mut data = vec![0.0; width * height * channels];
        for (c, plane) in planes.iter().enumerate() {
            for (i, v) in plane.iter().enumerate() {
                data[i * channels + c] = *v;
            }
        }
        Image::from_clamped(width, height, channels, data)
    }

    /// Grayscale copy. Single-channel images are returned unchanged.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| LUMA_WEIGHTS[0] * px[0] + LUMA_WEIGHTS[1] * px[1] + LUMA_WEIGHTS[2] * px[2])
            .collect();
        Image::from_clamped(self.width, self.height, 1, data)
    }

    /// Multiplies every intensity by `factor` (expected in `[0, 1]`).
    pub fn scaled(&self, factor: f32) -> Image {
        Image::from_clamped(
            self.width,
            self.height,
            self.channels,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    pub fn mean(&self) -> f64 {
        crate::stats::pairwise_sum(&self.data.iter().map(|&v| f64::from(v)).collect::<Vec<_>>())
            / self.data.len() as f64
    }

    /// Quantizes to 8 bits per channel.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|v| (v * 255.0).round() as u8).collect()
    }

    pub fn from_u8(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        Image::new(
            width,
            height,
            channels,
            bytes.iter().map(|&b| f32::from(b) / 255.0).collect(),
        )
    }
}

/// Single-channel float raster; NaN marks invalid pixels. Values are held
/// in double precision and stored as `f32` in PFM files.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl FloatMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::domain(format!(
                "{}x{} map needs {} values, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(FloatMap { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let v = self.data[y * self.width + x];
        (!v.is_nan()).then_some(v)
    }

    pub fn is_valid(&self, i: usize) -> bool {
        !self.data[i].is_nan()
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|v| !v.is_nan()).count()
    }

    pub fn same_dims(&self, other: &FloatMap) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Per-pixel scene depth in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap(FloatMap);

impl DepthMap {
    /// Valid entries must be finite and positive; NaN marks invalid pixels.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if let Some(v) = data.iter().find(|v| !v.is_nan() && !(v.is_finite() && **v > 0.0)) {
            return Err(Error::domain(format!("depth {v} is neither positive nor NaN")));
        }
        Ok(DepthMap(FloatMap::new(width, height, data)?))
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Result<Self> {
        DepthMap::new(width, height, vec![depth; width * height])
    }

    /// Marks non-positive and infinite entries invalid instead of rejecting them.
    pub fn from_map_lossy(map: FloatMap) -> Self {
        let FloatMap { width, height, data } = map;
        let data = data
            .into_iter()
            .map(|v| if v.is_finite() && v > 0.0 { v } else { f64::NAN })
            .collect();
        DepthMap(FloatMap { width, height, data })
    }

    pub fn map(&self) -> &FloatMap {
        &self.0
    }
}

impl std::ops::Deref for DepthMap {
    type Target = FloatMap;
    fn deref(&self) -> &FloatMap {
        &self.0
    }
}

/// Per-pixel PSF standard deviation in output pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurMap(FloatMap);

impl BlurMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if let Some(v) = data.iter().find(|v| !v.is_nan() && !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::domain(format!("blur {v} is neither >= 0 nor NaN")));
        }
        Ok(BlurMap(FloatMap::new(width, height, data)?))
    }

    pub fn from_map_lossy(map: FloatMap) -> Self {
        let FloatMap { width, height, data } = map;
        let data = data
            .into_iter()
            .map(|v| if v.is_finite() && v >= 0.0 { v } else { f64::NAN })
            .collect();
        BlurMap(FloatMap { width, height, data })
    }

    pub fn map(&self) -> &FloatMap {
        &self.0
    }
}

impl std::ops::Deref for BlurMap {
    type Target = FloatMap;
    fn deref(&self) -> &FloatMap {
        &self.0
    }
}

/// Comment line that labels blur-map files.
pub const BLUR_MAP_COMMENT: &str = "blurmap px";

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Decodes an 8-bit PNG or binary PGM/PPM, detected by its leading bytes.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.first() == Some(&b'P') {
        decode_pnm(bytes)
    } else if bytes.is_empty() {
        Err(Error::parse(0, "empty file"))
    } else {
        Err(Error::parse(0, "neither PNG nor PNM signature"))
    }
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    use image::{DynamicImage, ImageFormat};
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::Unsupported(u.to_string()),
        other => Error::Codec(other.to_string()),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => Image::from_u8(w, h, 1, buf.as_raw()),
        DynamicImage::ImageLumaA8(_) => Image::from_u8(w, h, 1, img.to_luma8().as_raw()),
        DynamicImage::ImageRgb8(buf) => Image::from_u8(w, h, 3, buf.as_raw()),
        DynamicImage::ImageRgba8(_) => Image::from_u8(w, h, 3, img.to_rgb8().as_raw()),
        other => Err(Error::Unsupported(format!(
            "PNG color type {:?}; only 8-bit gray and RGB are supported",
            other.color()
        ))),
    }
}

fn encode_png(img: &Image) -> Result<Vec<u8>> {
    use image::{ExtendedColorType, ImageEncoder};
    let color = if img.channels() == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(&img.to_u8(), img.width() as u32, img.height() as u32, color)
        .map_err(|e| Error::Codec(e.to_string()))?;
    Ok(out)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    decode_image(&read_file(path.as_ref())?)
}

/// Writes PNG for `.png`, binary PGM/PPM for `.pgm`, `.ppm` and `.pnm`.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let bytes = match ext.as_str() {
        "png" => encode_png(img)?,
        "pgm" | "ppm" | "pnm" => encode_pnm(img),
        other => {
            return Err(Error::Unsupported(format!(
                "image extension `{other}` (use png, pgm or ppm)"
            )))
        }
    };
    write_file(path, &bytes)
}

pub fn load_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    let (map, _) = decode_pfm(&read_file(path.as_ref())?)?;
    Ok(DepthMap::from_map_lossy(map))
}

pub fn save_depth(depth: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_pfm(depth.map(), None))
}

pub fn load_blur(path: impl AsRef<Path>) -> Result<BlurMap> {
    let (map, _) = decode_pfm(&read_file(path.as_ref())?)?;
    Ok(BlurMap::from_map_lossy(map))
}

pub fn save_blur(blur: &BlurMap, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_pfm(blur.map(), Some(BLUR_MAP_COMMENT)))
}
