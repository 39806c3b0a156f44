//! Flat `key=value` parameter files.
//!
//! Camera files use the keys `f_mm`, `N`, `p_um`, `out_pix`, `sensor_pix`,
//! `s1_m`, `kr` and `gamma_px`; units are part of the key name. Blur-model
//! files (the `meta.txt` written next to generated data) use `kcam`,
//! `gamma_px` and `s1_m`. Blank lines and `#` comments are ignored; unknown or
//! repeated keys are errors.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::optics::{BlurModel, CameraParams};

const CAMERA_KEYS: [&str; 8] = ["f_mm", "N", "p_um", "out_pix", "sensor_pix", "s1_m", "kr", "gamma_px"];
const MODEL_KEYS: [&str; 3] = ["kcam", "gamma_px", "s1_m"];

struct Entry<'a> {
    key: &'a str,
    value: &'a str,
    line: usize,
}

fn parse_entries<'a>(text: &'a str, allowed: &[&str]) -> Result<Vec<Entry<'a>>> {
    let mut entries: Vec<Entry> = Vec::new();
    let mut offset = 0;
    for (i, raw) in text.split_inclusive('\n').enumerate() {
        let line_start = offset;
        offset += raw.len();
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(line_start, format!("line {} is not `key=value`", i + 1)));
        };
        let (key, value) = (key.trim(), value.trim());
        if !allowed.contains(&key) {
            return Err(Error::UnknownKey(key.to_string()));
        }
        if entries.iter().any(|e| e.key == key) {
            return Err(Error::BadValue {
                key: key.to_string(),
                line: i + 1,
                reason: "key repeated".into(),
            });
        }
        entries.push(Entry { key, value, line: i + 1 });
    }
    Ok(entries)
}

fn lookup<T: std::str::FromStr>(entries: &[Entry], key: &str) -> Result<Option<T>> {
    let Some(e) = entries.iter().find(|e| e.key == key) else {
        return Ok(None);
    };
    e.value.parse().map(Some).map_err(|_| Error::BadValue {
        key: key.to_string(),
        line: e.line,
        reason: format!("cannot parse `{}`", e.value),
    })
}

fn require<T: std::str::FromStr>(entries: &[Entry], key: &str) -> Result<T> {
    lookup(entries, key)?.ok_or_else(|| Error::MissingKey(key.to_string()))
}

/// Contents of a camera parameter file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraConfig {
    pub params: CameraParams,
    /// Intrinsic blur, output pixels.
    pub gamma: f64,
}

impl CameraConfig {
    /// `kr` defaults to 1 and `gamma_px` to 0 when absent.
    pub fn parse(text: &str) -> Result<Self> {
        let e = parse_entries(text, &CAMERA_KEYS)?;
        let params = CameraParams {
            f: require::<f64>(&e, "f_mm")? * 1e-3,
            n: require(&e, "N")?,
            p: require::<f64>(&e, "p_um")? * 1e-6,
            out_pix: require(&e, "out_pix")?,
            sensor_pix: require(&e, "sensor_pix")?,
            s1: require(&e, "s1_m")?,
            kr: lookup(&e, "kr")?.unwrap_or(1.0),
        };
        params.validate()?;
        let gamma: f64 = lookup(&e, "gamma_px")?.unwrap_or(0.0);
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::param("gamma_px", format!("must be >= 0, got {gamma}")));
        }
        Ok(CameraConfig { params, gamma })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        CameraConfig::parse(&read_text(path.as_ref())?)
    }

    pub fn blur_model(&self) -> Result<BlurModel> {
        BlurModel::from_camera(&self.params, self.gamma)
    }

    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let _ = writeln!(s, "f_mm={}", p.f * 1e3);
        let _ = writeln!(s, "N={}", p.n);
        let _ = writeln!(s, "p_um={}", p.p * 1e6);
        let _ = writeln!(s, "out_pix={}", p.out_pix);
        let _ = writeln!(s, "sensor_pix={}", p.sensor_pix);
        let _ = writeln!(s, "s1_m={}", p.s1);
        let _ = writeln!(s, "kr={}", p.kr);
        let _ = writeln!(s, "gamma_px={}", self.gamma);
        s
    }
}

pub fn parse_model(text: &str) -> Result<BlurModel> {
    let e = parse_entries(text, &MODEL_KEYS)?;
    BlurModel::new(require(&e, "kcam")?, require(&e, "gamma_px")?, require(&e, "s1_m")?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<BlurModel> {
    parse_model(&read_text(path.as_ref())?)
}

pub fn format_model(model: &BlurModel) -> String {
    format!("kcam={}\ngamma_px={}\ns1_m={}\n", model.kcam, model.gamma, model.s1)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}
