//! Binary PGM (`P5`) and PPM (`P6`), 8 bits per sample.

use super::Image;
use crate::error::{Error, Result};

/// Whitespace/comment-aware reader for netpbm-style ASCII headers.
pub(super) struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    pub(super) fn new(bytes: &'a [u8]) -> Self {
        HeaderReader { bytes, pos: 0 }
    }

    /// Skips whitespace and `#` comments; returns the comment texts seen.
    pub(super) fn skip_space(&mut self) -> Vec<String> {
        let mut comments = Vec::new();
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                let start = self.pos + 1;
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
                comments.push(String::from_utf8_lossy(&self.bytes[start..self.pos]).trim().to_string());
            } else {
                break;
            }
        }
        comments
    }

    /// Next whitespace-delimited token and the offset where it starts.
    pub(super) fn token(&mut self, what: &str) -> Result<(&'a str, usize)> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, format!("expected {what}, found end of file")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map(|s| (s, start))
            .map_err(|_| Error::parse(start, format!("{what} is not ASCII")))
    }

    pub(super) fn dimension(&mut self, what: &str) -> Result<usize> {
        let (tok, at) = self.token(what)?;
        match tok.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::parse(at, format!("invalid {what} `{tok}`"))),
        }
    }

    /// Consumes the single whitespace byte that separates header from payload.
    pub(super) fn end_of_header(&mut self) -> Result<usize> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(self.pos)
            }
            _ => Err(Error::parse(self.pos, "missing whitespace after header")),
        }
    }
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let mut r = HeaderReader::new(bytes);
    let (magic, _) = r.token("magic number")?;
    let channels = match magic {
        "P5" => 1,
        "P6" => 3,
        "P1" | "P2" | "P3" | "P4" | "P7" => {
            return Err(Error::Unsupported(format!("netpbm variant {magic}; only P5 and P6")))
        }
        _ => return Err(Error::parse(0, format!("bad magic `{magic}`"))),
    };
    let width = r.dimension("width")?;
    let height = r.dimension("height")?;
    let (maxval_tok, at) = r.token("maxval")?;
    let maxval: u32 = maxval_tok
        .parse()
        .map_err(|_| Error::parse(at, format!("invalid maxval `{maxval_tok}`")))?;
    if maxval != 255 {
        return Err(Error::Unsupported(format!("maxval {maxval}; only 8-bit (255) samples")));
    }
    let start = r.end_of_header()?;
    let expected = width * height * channels;
    let payload = &bytes[start..];
    if payload.len() != expected {
        return Err(Error::parse(
            start + payload.len().min(expected),
            format!(
                "{width}x{height}x{channels} payload needs {expected} bytes, found {}",
                payload.len()
            ),
        ));
    }
    Image::from_u8(width, height, channels, payload)
}

pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_u8());
    out
}
