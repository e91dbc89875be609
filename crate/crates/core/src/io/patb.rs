//! PATB tensor files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "PATB" | version: u32 = 1 | ndim: u32 | dims: ndim × u32 | payload
//! ```
//!
//! The payload holds `Π dims` row-major IEEE-754 `f32` values, little-endian.
//! `ndim` is 2 or 3 and every dimension is at least 1.

use std::path::Path;

use ndarray::{Array2, Array3};

use super::{read_bytes, write_atomic};
use crate::error::{Error, Result};
use crate::forward::SensorData;
use crate::geometry::{DetectorArray, ImageGrid, TimeGrid};
use crate::image::Image;
use crate::recon::WeightTensor;

pub const MAGIC: &[u8; 4] = b"PATB";
pub const VERSION: u32 = 1;

/// Parsed file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn encode(dims: &[usize], data: &[f32]) -> Result<Vec<u8>> {
    if !(2..=3).contains(&dims.len()) || dims.iter().any(|&d| d == 0 || d > u32::MAX as usize) {
        return Err(Error::Data(format!("PATB dims {dims:?} must be 2 or 3 positive u32 values")));
    }
    let count: usize = dims.iter().product();
    if count != data.len() {
        return Err(Error::shape("PATB payload", &[count], &[data.len()]));
    }
    let mut out = Vec::with_capacity(12 + 4 * dims.len() + 4 * count);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let word = |offset: usize| -> Result<u32> {
        bytes
            .get(offset..offset + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| bad("truncated header".into()))
    };
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(bad("missing PATB magic".into()));
    }
    let version = word(4)?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let ndim = word(8)? as usize;
    if !(2..=3).contains(&ndim) {
        return Err(bad(format!("ndim must be 2 or 3, got {ndim}")));
    }
    let dims = (0..ndim)
        .map(|k| word(12 + 4 * k).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    if dims.contains(&0) {
        return Err(bad(format!("zero dimension in {dims:?}")));
    }
    let header = 12 + 4 * ndim;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad("dimension product overflows".into()))?;
    let payload = &bytes[header..];
    if Some(payload.len()) != count.checked_mul(4) {
        return Err(bad(format!(
            "payload has {} bytes, dims {dims:?} need {}",
            payload.len(),
            4 * count
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Tensor { dims, data })
}

pub fn write(path: &Path, dims: &[usize], data: &[f32]) -> Result<()> {
    write_atomic(path, &encode(dims, data)?)
}

pub fn read(path: &Path) -> Result<Tensor> {
    decode(&read_bytes(path)?, path)
}

fn to_f32<'a>(values: impl Iterator<Item = &'a f64>) -> Vec<f32> {
    values.map(|&v| v as f32).collect()
}

pub fn write_array2(path: &Path, values: &Array2<f64>) -> Result<()> {
    write(path, values.shape(), &to_f32(values.iter()))
}

pub fn write_array3(path: &Path, values: &Array3<f64>) -> Result<()> {
    write(path, values.shape(), &to_f32(values.iter()))
}

pub fn read_array2(path: &Path) -> Result<Array2<f64>> {
    let t = read(path)?;
    if t.dims.len() != 2 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected a 2-D tensor, found dims {:?}", t.dims),
        });
    }
    Ok(Array2::from_shape_vec((t.dims[0], t.dims[1]), t.data.iter().map(|&v| v as f64).collect())
        .unwrap())
}

pub fn read_array3(path: &Path) -> Result<Array3<f64>> {
    let t = read(path)?;
    if t.dims.len() != 3 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected a 3-D tensor, found dims {:?}", t.dims),
        });
    }
    Ok(Array3::from_shape_vec(
        (t.dims[0], t.dims[1], t.dims[2]),
        t.data.iter().map(|&v| v as f64).collect(),
    )
    .unwrap())
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    write_array2(path, img.values())
}

pub fn read_image(path: &Path, grid: ImageGrid) -> Result<Image> {
    let values = read_array2(path)?;
    if values.dim() != (grid.n(), grid.n()) {
        return Err(Error::shape(
            format!("image {}", path.display()),
            &[grid.n(), grid.n()],
            values.shape(),
        ));
    }
    Image::from_values(grid, values)
}

/// Axis order `(time, detector)`.
pub fn write_sensor_data(path: &Path, data: &SensorData) -> Result<()> {
    write_array2(path, data.values())
}

pub fn read_sensor_data(path: &Path, time: TimeGrid, detectors: DetectorArray) -> Result<SensorData> {
    let values = read_array2(path)?;
    let expected = [time.n_t(), detectors.len()];
    if values.shape() != expected {
        return Err(Error::shape(format!("sensor data {}", path.display()), &expected, values.shape()));
    }
    SensorData::new(values, time, detectors)
}

/// Axis order `(row, col, detector)`.
pub fn write_weights(path: &Path, weights: &WeightTensor) -> Result<()> {
    write_array3(path, weights.values())
}

/// Reads weights, requiring `n_s` detectors and a weight grid side of
/// `image_grid.n()` unless `allow_coarse` is set.
pub fn read_weights(
    path: &Path,
    image_grid: &ImageGrid,
    n_s: usize,
    allow_coarse: bool,
) -> Result<WeightTensor> {
    let values = read_array3(path)?;
    let (a, b, c) = values.dim();
    let n = image_grid.n();
    let side_ok = a == b && (a == n || (allow_coarse && (2..n).contains(&a)));
    if !side_ok || c != n_s {
        return Err(Error::shape(
            format!("weights {}", path.display()),
            &[n, n, n_s],
            values.shape(),
        ));
    }
    WeightTensor::from_values(ImageGrid::new(a, image_grid.extent())?, values)
}
