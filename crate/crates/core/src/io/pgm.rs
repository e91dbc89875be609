//! 16-bit binary PGM (P5) export with an invertible min-max normalization.
//!
//! Pixel `p = round((v - min) / (max - min) * 65535)`; the `min`/`max` pair
//! is stored next to the image in `<file>.norm` so values can be recovered
//! as `min + p / 65535 * (max - min)`.

use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{config, read_bytes, read_text, write_atomic};
use crate::error::{Error, Result};

pub const MAX_VALUE: u16 = u16::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
}

impl Normalization {
    pub fn fit(values: &Array2<f64>) -> Self {
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if min.is_finite() {
            Self { min, max }
        } else {
            Self { min: 0.0, max: 0.0 }
        }
    }

    pub fn encode(&self, v: f64) -> u16 {
        let span = self.max - self.min;
        if span <= 0.0 {
            return 0;
        }
        (((v - self.min) / span) * MAX_VALUE as f64)
            .round()
            .clamp(0.0, MAX_VALUE as f64) as u16
    }

    pub fn decode(&self, p: u16) -> f64 {
        self.min + p as f64 / MAX_VALUE as f64 * (self.max - self.min)
    }
}

pub fn sidecar_path(pgm: &Path) -> PathBuf {
    let mut name = pgm.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".norm");
    pgm.with_file_name(name)
}

pub fn encode(values: &Array2<f64>, norm: &Normalization) -> Vec<u8> {
    let (rows, cols) = values.dim();
    let mut out = format!("P5\n{cols} {rows}\n{MAX_VALUE}\n").into_bytes();
    out.reserve(2 * rows * cols);
    for v in values.iter() {
        out.extend_from_slice(&norm.encode(*v).to_be_bytes());
    }
    out
}

/// Writes the image and its normalization sidecar.
pub fn write(path: &Path, values: &Array2<f64>) -> Result<Normalization> {
    let norm = Normalization::fit(values);
    write_atomic(path, &encode(values, &norm))?;
    let sidecar = format!(
        "# affine map: value = min + pixel / {MAX_VALUE} * (max - min)\nmin = {:e}\nmax = {:e}\n",
        norm.min, norm.max
    );
    write_atomic(&sidecar_path(path), sidecar.as_bytes())?;
    Ok(norm)
}

pub fn read_normalization(pgm: &Path) -> Result<Normalization> {
    let path = sidecar_path(pgm);
    let kv = config::parse(&read_text(&path)?, &path)?;
    let get = |key: &str| -> Result<f64> {
        kv.get(key)
            .ok_or_else(|| Error::Format {
                path: path.clone(),
                reason: format!("missing key '{key}'"),
            })?
            .parse()
            .map_err(|_| Error::Format {
                path: path.clone(),
                reason: format!("'{key}' is not a number"),
            })
    };
    Ok(Normalization {
        min: get("min")?,
        max: get("max")?,
    })
}

/// Reads a 16-bit P5 file written by [`write`] (single whitespace between
/// header fields, no comments).
pub fn read(path: &Path) -> Result<Array2<u16>> {
    let bytes = read_bytes(path)?;
    let bad = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad PGM header number"));
    let (cols, rows, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != MAX_VALUE as usize {
        return Err(bad("only 16-bit PGM is supported"));
    }
    let payload = bytes.get(pos..).unwrap_or_default();
    if payload.len() != 2 * rows * cols {
        return Err(bad("PGM payload size mismatch"));
    }
    let px = payload
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), px).unwrap())
}
