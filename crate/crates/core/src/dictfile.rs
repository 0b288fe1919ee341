//! Binary dictionary files.
//!
//! Layout (all integers `u64` little-endian, floats `f64` little-endian):
//!
//! ```text
//! magic      4 bytes   "CDL1" (coupled triples) or "SDL1" (single dictionaries)
//! L          u64       scale count
//! per scale  k × (rows u64, cols u64), then the k matrices row-major
//! ```
//!
//! with `k = 3` (`Ψᶜ`, `Φᶜ`, `Φ`) for CDL1 and `k = 1` for SDL1.

use std::path::Path;

use crate::dictlearn::{CoupledDictionaryTriple, UNIT_NORM_TOL};
use crate::error::{Error, Result};
use crate::fsio::{read_all, write_atomic};
use crate::numerics::Mat;

pub const COUPLED_MAGIC: &[u8; 4] = b"CDL1";
pub const SINGLE_MAGIC: &[u8; 4] = b"SDL1";

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        kind: "dictionary file",
        reason: reason.into(),
    }
}

fn encode(magic: &[u8; 4], scales: &[Vec<&Mat>]) -> Vec<u8> {
    let mut out = magic.to_vec();
    out.extend_from_slice(&(scales.len() as u64).to_le_bytes());
    for mats in scales {
        for m in mats {
            out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        }
        for m in mats {
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format_err(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<usize> {
        let b = self.take(8, what)?;
        let v = u64::from_le_bytes(b.try_into().unwrap());
        usize::try_from(v).map_err(|_| format_err(format!("{what} {v} is too large")))
    }
}

fn decode(bytes: &[u8], magic: &[u8; 4], k: usize) -> Result<Vec<Vec<Mat>>> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        return Err(format_err(format!(
            "missing {} magic",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut c = Cursor { bytes, pos: 4 };
    let scales = c.u64("scale count")?;
    let mut out = Vec::new();
    for l in 0..scales {
        let mut shapes = Vec::with_capacity(k);
        for _ in 0..k {
            shapes.push((c.u64("rows")?, c.u64("cols")?));
        }
        let mut mats = Vec::with_capacity(k);
        for (r, cols) in shapes {
            let count = r
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| format_err(format!("scale {} matrix size overflows", l + 1)))?;
            let raw = c.take(count, "matrix payload")?;
            let data = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            mats.push(Mat::from_row_major(r, cols, data)?);
        }
        out.push(mats);
    }
    if c.pos != bytes.len() {
        return Err(format_err(format!(
            "{} trailing bytes after the last scale",
            bytes.len() - c.pos
        )));
    }
    Ok(out)
}

pub fn encode_coupled(triples: &[CoupledDictionaryTriple]) -> Vec<u8> {
    let scales: Vec<Vec<&Mat>> = triples
        .iter()
        .map(|t| vec![&t.psi_c, &t.phi_c, &t.phi])
        .collect();
    encode(COUPLED_MAGIC, &scales)
}

/// Decodes a CDL1 payload; entry `l` gets scale index `l + 1`.
pub fn decode_coupled(bytes: &[u8]) -> Result<Vec<CoupledDictionaryTriple>> {
    decode(bytes, COUPLED_MAGIC, 3)?
        .into_iter()
        .enumerate()
        .map(|(l, mut m)| {
            let phi = m.pop().unwrap();
            let phi_c = m.pop().unwrap();
            let psi_c = m.pop().unwrap();
            CoupledDictionaryTriple::new(psi_c, phi_c, phi, l + 1)
        })
        .collect()
}

pub fn encode_single(dicts: &[Mat]) -> Vec<u8> {
    let scales: Vec<Vec<&Mat>> = dicts.iter().map(|m| vec![m]).collect();
    encode(SINGLE_MAGIC, &scales)
}

/// Decodes an SDL1 payload, checking unit-norm columns.
pub fn decode_single(bytes: &[u8]) -> Result<Vec<Mat>> {
    decode(bytes, SINGLE_MAGIC, 1)?
        .into_iter()
        .enumerate()
        .map(|(l, mut m)| {
            let d = m.pop().unwrap();
            if let Some(j) = d
                .column_norms()
                .iter()
                .position(|v| (v - 1.0).abs() > UNIT_NORM_TOL)
            {
                return Err(format_err(format!(
                    "scale {} column {j} is not unit norm",
                    l + 1
                )));
            }
            Ok(d)
        })
        .collect()
}

pub fn write_coupled(path: &Path, triples: &[CoupledDictionaryTriple]) -> Result<()> {
    write_atomic(path, &encode_coupled(triples))
}

pub fn read_coupled(path: &Path) -> Result<Vec<CoupledDictionaryTriple>> {
    decode_coupled(&read_all(path)?)
}

pub fn write_single(path: &Path, dicts: &[Mat]) -> Result<()> {
    write_atomic(path, &encode_single(dicts))
}

pub fn read_single(path: &Path) -> Result<Vec<Mat>> {
    decode_single(&read_all(path)?)
}
