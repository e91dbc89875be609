use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::ImageGrid;

/// Scalar image on an [`ImageGrid`], indexed `[row, col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    grid: ImageGrid,
    values: Array2<f64>,
}

impl Image {
    pub fn zeros(grid: ImageGrid) -> Self {
        Self {
            grid,
            values: Array2::zeros((grid.n(), grid.n())),
        }
    }

    pub fn from_values(grid: ImageGrid, values: Array2<f64>) -> Result<Self> {
        let n = grid.n();
        if values.dim() != (n, n) {
            return Err(Error::shape("image values", &[n, n], values.shape()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("image contains non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    /// Evaluates `f` at every pixel center.
    pub fn from_fn(grid: ImageGrid, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let values = Array2::from_shape_fn((grid.n(), grid.n()), |(i, j)| f(grid.center(i, j)));
        Self { grid, values }
    }

    pub fn grid(&self) -> &ImageGrid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Bilinear interpolation between pixel centers; samples outside the
    /// grid read as zero.
    pub fn sample(&self, p: [f64; 2]) -> f64 {
        let (fi, fj) = self.grid.fractional_index(p);
        bilinear(&self.values, fi, fj)
    }

    pub(crate) fn check_same_grid(&self, other: &Image, context: &str) -> Result<()> {
        if self.grid != other.grid {
            let (a, b) = (self.grid.n(), other.grid.n());
            return Err(Error::shape(context, &[a, a], &[b, b]));
        }
        Ok(())
    }
}

/// Bilinear interpolation at fractional (row, col) with zero padding.
pub(crate) fn bilinear(values: &Array2<f64>, fi: f64, fj: f64) -> f64 {
    let (rows, cols) = values.dim();
    let i0 = fi.floor();
    let j0 = fj.floor();
    if i0 < -1.0 || j0 < -1.0 || i0 >= rows as f64 || j0 >= cols as f64 {
        return 0.0;
    }
    let di = fi - i0;
    let dj = fj - j0;
    let i0 = i0 as isize;
    let j0 = j0 as isize;
    let at = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= rows as isize || j >= cols as isize {
            0.0
        } else {
            values[[i as usize, j as usize]]
        }
    };
    let top = at(i0, j0) * (1.0 - dj) + at(i0, j0 + 1) * dj;
    let bottom = at(i0 + 1, j0) * (1.0 - dj) + at(i0 + 1, j0 + 1) * dj;
    top * (1.0 - di) + bottom * di
}
