//! Portable float map, single channel (`Pf`).
//!
//! Rows are stored bottom-to-top. A negative scale marks little-endian
//! samples; positive means big-endian, which is byte-swapped on load.
//! Writers always emit little-endian with scale `-1.0`.

use super::pnm::HeaderReader;
use super::FloatMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FloatMapHeader {
    pub scale: f32,
    pub comments: Vec<String>,
}

impl FloatMapHeader {
    pub fn little_endian(&self) -> bool {
        self.scale < 0.0
    }
}

pub fn decode_pfm(bytes: &[u8]) -> Result<(FloatMap, FloatMapHeader)> {
    let mut r = HeaderReader::new(bytes);
    let (magic, _) = r.token("magic number")?;
    match magic {
        "Pf" => {}
        "PF" => return Err(Error::Unsupported("three-channel PFM (`PF`)".into())),
        _ => return Err(Error::parse(0, format!("bad magic `{magic}`, expected `Pf`"))),
    }
    let comments = r.skip_space();
    let width = r.dimension("width")?;
    let height = r.dimension("height")?;
    let (scale_tok, at) = r.token("scale")?;
    let scale: f32 = scale_tok
        .parse()
        .map_err(|_| Error::parse(at, format!("invalid scale `{scale_tok}`")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::parse(at, format!("scale must be non-zero, got `{scale_tok}`")));
    }
    let start = r.end_of_header()?;
    let expected = width * height * 4;
    let payload = &bytes[start..];
    if payload.len() != expected {
        return Err(Error::parse(
            start + payload.len().min(expected),
            format!("{width}x{height} payload needs {expected} bytes, found {}", payload.len()),
        ));
    }
    let little = scale < 0.0;
    let mut data = vec![0.0f64; width * height];
    for (file_row, chunk) in payload.chunks_exact(width * 4).enumerate() {
        let y = height - 1 - file_row;
        for (x, b) in chunk.chunks_exact(4).enumerate() {
            let raw = [b[0], b[1], b[2], b[3]];
            data[y * width + x] = f64::from(if little {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            });
        }
    }
    Ok((FloatMap::new(width, height, data)?, FloatMapHeader { scale, comments }))
}

pub fn encode_pfm(map: &FloatMap, comment: Option<&str>) -> Vec<u8> {
    let mut out = b"Pf\n".to_vec();
    if let Some(c) = comment {
        out.extend(format!("# {c}\n").bytes());
    }
    out.extend(format!("{} {}\n-1.0\n", map.width(), map.height()).bytes());
    for row in map.data().chunks_exact(map.width()).rev() {
        for v in row {
            out.extend((*v as f32).to_le_bytes());
        }
    }
    out
}
