//! Binary PGM (P5) reading and writing, 8- and 16-bit.
//!
//! Samples map linearly to `[0, 1]` by dividing by the declared maxval.
//! Writing rounds to the nearest level after clamping to `[0, 1]`, and
//! always emits the header `P5\n<w> <h>\n<maxval>\n`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fsio::{read_all, write_atomic};
use crate::image::Image;

/// A decoded PGM file.
#[derive(Clone, Debug, PartialEq)]
pub struct Pgm {
    pub image: Image,
    pub maxval: u16,
}

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        kind: "PGM",
        reason: reason.into(),
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| format_err(format!("{what} out of range")))
    }
}

/// Parses a P5 file.
pub fn decode_pgm(bytes: &[u8]) -> Result<Pgm> {
    if !bytes.starts_with(b"P5") {
        return Err(format_err("not a binary PGM (missing P5 magic)"));
    }
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(format_err(format!("empty image {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format_err(format!("maxval {maxval} outside 1..=65535")));
    }
    match bytes.get(h.pos) {
        Some(b) if b.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(format_err("no whitespace after maxval")),
    }
    let bps = if maxval > 255 { 2 } else { 1 };
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(bps))
        .ok_or_else(|| format_err("image size overflows"))?;
    let payload = &bytes[h.pos..];
    if payload.len() != count {
        return Err(format_err(format!(
            "expected {count} sample bytes, found {}",
            payload.len()
        )));
    }
    let scale = maxval as f64;
    let mut data = Vec::with_capacity(width * height);
    if bps == 1 {
        for &b in payload {
            if b as usize > maxval {
                return Err(format_err(format!("sample {b} exceeds maxval {maxval}")));
            }
            data.push(b as f64 / scale);
        }
    } else {
        for pair in payload.chunks_exact(2) {
            let v = u16::from_be_bytes([pair[0], pair[1]]);
            if v as usize > maxval {
                return Err(format_err(format!("sample {v} exceeds maxval {maxval}")));
            }
            data.push(v as f64 / scale);
        }
    }
    Ok(Pgm {
        image: Image::new(height, width, data)?,
        maxval: maxval as u16,
    })
}

/// Encodes `img` as P5 with the given maxval.
pub fn encode_pgm(img: &Image, maxval: u16) -> Result<Vec<u8>> {
    if maxval == 0 {
        return Err(Error::param("PGM maxval must be positive"));
    }
    let (h, w) = img.dims();
    let mut out = format!("P5\n{w} {h}\n{maxval}\n").into_bytes();
    let scale = maxval as f64;
    for &v in img.as_slice() {
        let q = (v.clamp(0.0, 1.0) * scale).round() as u16;
        if maxval > 255 {
            out.extend_from_slice(&q.to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    Ok(out)
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    decode_pgm(&read_all(path)?).map_err(|e| match e {
        Error::Format { kind, reason } => Error::Format {
            kind,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}

/// Atomically writes `img` to `path`.
pub fn write_pgm(path: &Path, img: &Image, maxval: u16) -> Result<()> {
    write_atomic(path, &encode_pgm(img, maxval)?)
}
