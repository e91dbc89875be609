//! Discretized weighted universal backprojection.
//!
//! The reconstruction at a pixel `x` is `P(W, G)(x) = Σ_j W(x, s_j)² b(x, s_j)`
//! where the per-detector contribution is
//!
//! ```text
//! b(x, s) = (1/π) ⟨ν_s, x - s⟩ Δs ∫_{|x-s|}^T q(s, t) / √(t² - |x-s|²) dt,
//! q(s, t) = ∂_t (g(s, t) / t).
//! ```
//!
//! The prefactor `1/π` is the one for which `W ≡ 1` inverts the forward
//! operator of [`crate::forward`] on full-view data; `-2/π` yields `-2 f`.
//! `W ≡ 1` is the ordinary backprojection. Times are converted to travel
//! distances (`ρ = c t`) so the formula is applied with unit speed.

use ndarray::{Array2, Array3, Axis};
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::forward::{differentiate, SensorData};
use crate::geometry::{ImageGrid, TimeGrid};
use crate::image::Image;

/// Per-pixel, per-detector weights, indexed `[row, col, detector]`.
///
/// The weight grid may be coarser than the image grid; it is then
/// bilinearly upsampled before use.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    grid: ImageGrid,
    values: Array3<f64>,
}

impl WeightTensor {
    pub fn ones(grid: ImageGrid, n_s: usize) -> Self {
        Self::constant(grid, n_s, 1.0)
    }

    pub fn constant(grid: ImageGrid, n_s: usize, value: f64) -> Self {
        Self {
            grid,
            values: Array3::from_elem((grid.n(), grid.n(), n_s), value),
        }
    }

    pub fn from_values(grid: ImageGrid, values: Array3<f64>) -> Result<Self> {
        let (a, b, _) = values.dim();
        if a != grid.n() || b != grid.n() {
            return Err(Error::shape(
                "weight tensor",
                &[grid.n(), grid.n(), values.dim().2],
                values.shape(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("weight tensor contains non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &ImageGrid {
        &self.grid
    }

    pub fn n_s(&self) -> usize {
        self.values.dim().2
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array3<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array3<f64> {
        self.values
    }

    /// Weights of one detector as an image.
    pub fn slice(&self, detector: usize) -> Result<Image> {
        if detector >= self.n_s() {
            return Err(Error::Data(format!(
                "detector index {detector} out of range for {} detectors",
                self.n_s()
            )));
        }
        Image::from_values(self.grid, self.values.index_axis(Axis(2), detector).to_owned())
    }

    /// Bilinear map from this (possibly coarse) grid to `target`.
    pub fn upsample(&self, target: &ImageGrid) -> WeightTensor {
        if self.grid == *target {
            return self.clone();
        }
        let map = Resampling::new(self.grid.n(), target.n());
        let n_s = self.n_s();
        let mut out = Array3::zeros((target.n(), target.n(), n_s));
        for i in 0..target.n() {
            let (ri, rw) = map.taps[i];
            for j in 0..target.n() {
                let (ci, cw) = map.taps[j];
                for j_s in 0..n_s {
                    let v = |a: usize, b: usize| self.values[[a, b, j_s]];
                    out[[i, j, j_s]] = (1.0 - rw) * ((1.0 - cw) * v(ri, ci) + cw * v(ri, ci + 1))
                        + rw * ((1.0 - cw) * v(ri + 1, ci) + cw * v(ri + 1, ci + 1));
                }
            }
        }
        WeightTensor {
            grid: *target,
            values: out,
        }
    }

    /// Adjoint of [`upsample`](Self::upsample): pulls a full-grid gradient
    /// back onto this tensor's grid.
    pub fn upsample_adjoint(&self, full: &Array3<f64>) -> Array3<f64> {
        let n_full = full.dim().0;
        if n_full == self.grid.n() {
            return full.clone();
        }
        let map = Resampling::new(self.grid.n(), n_full);
        let n_s = self.n_s();
        let mut out = Array3::zeros(self.values.dim());
        for i in 0..n_full {
            let (ri, rw) = map.taps[i];
            for j in 0..n_full {
                let (ci, cw) = map.taps[j];
                for j_s in 0..n_s {
                    let g = full[[i, j, j_s]];
                    out[[ri, ci, j_s]] += (1.0 - rw) * (1.0 - cw) * g;
                    out[[ri, ci + 1, j_s]] += (1.0 - rw) * cw * g;
                    out[[ri + 1, ci, j_s]] += rw * (1.0 - cw) * g;
                    out[[ri + 1, ci + 1, j_s]] += rw * cw * g;
                }
            }
        }
        out
    }
}

/// Pixel-center aligned linear interpolation taps from `m` to `n` samples.
struct Resampling {
    taps: Vec<(usize, f64)>,
}

impl Resampling {
    fn new(m: usize, n: usize) -> Self {
        let taps = (0..n)
            .map(|i| {
                let u = ((i as f64 + 0.5) * m as f64 / n as f64 - 0.5).clamp(0.0, (m - 1) as f64);
                let lo = (u.floor() as usize).min(m - 2);
                (lo, u - lo as f64)
            })
            .collect();
        Self { taps }
    }
}

/// Unweighted per-detector contributions `b(x, s_j)`, indexed
/// `[row, col, detector]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContribTensor {
    grid: ImageGrid,
    values: Array3<f64>,
}

impl ContribTensor {
    pub fn grid(&self) -> &ImageGrid {
        &self.grid
    }

    pub fn n_s(&self) -> usize {
        self.values.dim().2
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    /// Ordinary backprojection `Σ_j b(x, s_j)`.
    pub fn sum(&self) -> Image {
        let n = self.grid.n();
        let n_s = self.n_s();
        let b = self.values.as_slice().expect("contiguous contributions");
        let mut out = vec![0.0; n * n];
        out.par_iter_mut().enumerate().for_each(|(p, o)| {
            let mut acc = 0.0;
            for v in &b[p * n_s..(p + 1) * n_s] {
                acc += *v;
            }
            *o = acc;
        });
        Image::from_values(self.grid, Array2::from_shape_vec((n, n), out).unwrap())
            .expect("finite contributions")
    }
}

/// `∂_t (g / t)` per detector column, using central differences with
/// one-sided stencils at the ends.
pub fn time_filter(data: &SensorData) -> Array2<f64> {
    let time = data.time();
    let t = time.samples();
    let (n_t, n_s) = data.values().dim();
    let mut q = Array2::zeros((n_t, n_s));
    for j in 0..n_s {
        let quotient: Vec<f64> = (0..n_t).map(|k| data.values()[[k, j]] / t[k]).collect();
        for (k, v) in differentiate(&quotient, time.dt()).into_iter().enumerate() {
            q[[k, j]] = v;
        }
    }
    q
}

/// `∫_d^T q(t) / √(t² − d²) dt` for `q` piecewise linear between the
/// samples of `time`; the kernel is integrated exactly on every piece.
/// Returns 0 when `d ≥ T`.
pub fn singular_integral(q: &[f64], d: f64, time: &TimeGrid) -> f64 {
    let n_t = time.n_t();
    debug_assert_eq!(q.len(), n_t);
    let t_final = time.t_final();
    if d >= t_final {
        return 0.0;
    }
    let dt = time.dt();
    // first sample strictly above d
    let mut k = ((d / dt).floor() as usize).min(n_t);
    while k < n_t && time.sample(k) <= d {
        k += 1;
    }
    if k >= n_t {
        return 0.0;
    }
    let kernel = |t: f64| -> (f64, f64) {
        let s = ((t - d) * (t + d)).max(0.0).sqrt();
        ((t + s).ln(), s)
    };
    let mut total = 0.0;
    let (mut log_lo, mut sqrt_lo);
    if k == 0 {
        // nothing is known below the first sample
        let t0 = time.sample(0);
        (log_lo, sqrt_lo) = kernel(t0);
    } else {
        // partial piece [d, t_k] on the segment from t_{k-1} to t_k
        let t_a = time.sample(k - 1);
        let t_b = time.sample(k);
        let (log_b, sqrt_b) = kernel(t_b);
        let (log_d, sqrt_d) = (d.ln(), 0.0);
        let slope = (q[k] - q[k - 1]) / dt;
        total += q[k - 1] * (log_b - log_d) + slope * ((sqrt_b - sqrt_d) - t_a * (log_b - log_d));
        log_lo = log_b;
        sqrt_lo = sqrt_b;
    }
    for m in k..n_t - 1 {
        let t_a = time.sample(m);
        let (log_hi, sqrt_hi) = kernel(time.sample(m + 1));
        let d_log = log_hi - log_lo;
        let slope = (q[m + 1] - q[m]) / dt;
        total += q[m] * d_log + slope * ((sqrt_hi - sqrt_lo) - t_a * d_log);
        log_lo = log_hi;
        sqrt_lo = sqrt_hi;
    }
    total
}

/// Backprojection evaluation options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackprojectOptions {
    pub sound_speed: f64,
    /// Evaluate the singular integral at every pixel distance instead of
    /// interpolating a per-detector table.
    pub exact: bool,
}

impl Default for BackprojectOptions {
    fn default() -> Self {
        Self {
            sound_speed: 1.0,
            exact: false,
        }
    }
}

/// `I(d)` on `d_m = m h`, `h = T / (4 n_t)`, for linear interpolation.
struct DistanceTable {
    h: f64,
    values: Vec<f64>,
}

impl DistanceTable {
    fn new(q: &[f64], time: &TimeGrid) -> Self {
        let n = 4 * time.n_t();
        let h = time.t_final() / n as f64;
        let values = (0..=n).map(|m| singular_integral(q, m as f64 * h, time)).collect();
        Self { h, values }
    }

    fn eval(&self, d: f64) -> f64 {
        let u = d / self.h;
        let m = u.floor() as usize;
        if m + 1 >= self.values.len() {
            return 0.0;
        }
        let f = u - m as f64;
        (1.0 - f) * self.values[m] + f * self.values[m + 1]
    }
}

/// Per-detector contributions of one data set on `grid`.
pub fn backproject_contrib(
    data: &SensorData,
    grid: &ImageGrid,
    opts: &BackprojectOptions,
) -> Result<ContribTensor> {
    let c = opts.sound_speed;
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Config(format!("sound speed must be positive, got {c}")));
    }
    let time = data.time();
    // distance units: ρ = c t, q_ρ = q_t / c²
    let rho = TimeGrid::new(time.n_t(), c * time.t_final())?;
    let q = time_filter(data) / (c * c);
    let detectors = data.detectors();
    let n_s = detectors.len();
    let n = grid.n();

    let tol = 1e-12 * detectors.radius();
    for i in 0..n {
        for j in 0..n {
            let x = grid.center(i, j);
            for s in detectors.positions() {
                if (x[0] - s[0]).hypot(x[1] - s[1]) <= tol {
                    return Err(Error::Config(format!(
                        "pixel ({i}, {j}) at {x:?} coincides with detector at {s:?}"
                    )));
                }
            }
        }
    }

    let columns: Vec<Vec<f64>> = (0..n_s).map(|j| q.column(j).to_vec()).collect();
    let tables: Option<Vec<DistanceTable>> = (!opts.exact)
        .then(|| columns.par_iter().map(|col| DistanceTable::new(col, &rho)).collect());
    let scale = detectors.arc_weight() / PI;

    let mut values = vec![0.0; n * n * n_s];
    values
        .par_chunks_mut(n * n_s)
        .enumerate()
        .for_each(|(i, row)| {
            for j in 0..n {
                let x = grid.center(i, j);
                for (k, (s, nu)) in detectors
                    .positions()
                    .iter()
                    .zip(detectors.normals())
                    .enumerate()
                {
                    let dx = [x[0] - s[0], x[1] - s[1]];
                    let d = dx[0].hypot(dx[1]);
                    let integral = match &tables {
                        Some(t) => t[k].eval(d),
                        None => singular_integral(&columns[k], d, &rho),
                    };
                    row[j * n_s + k] = scale * (nu[0] * dx[0] + nu[1] * dx[1]) * integral;
                }
            }
        });
    Ok(ContribTensor {
        grid: *grid,
        values: Array3::from_shape_vec((n, n, n_s), values).unwrap(),
    })
}

/// Ordinary backprojection of `data` on `grid`.
pub fn ubp(data: &SensorData, grid: &ImageGrid, opts: &BackprojectOptions) -> Result<Image> {
    Ok(backproject_contrib(data, grid, opts)?.sum())
}

fn check_weights(weights: &WeightTensor, contrib: &ContribTensor) -> Result<()> {
    if weights.grid() != contrib.grid() || weights.n_s() != contrib.n_s() {
        return Err(Error::shape(
            "weighted backprojection",
            contrib.values().shape(),
            weights.values().shape(),
        ));
    }
    Ok(())
}

/// `Σ_j W(x, s_j)² b(x, s_j)` for full-resolution weights.
pub fn weighted_ubp(weights: &WeightTensor, contrib: &ContribTensor) -> Result<Image> {
    Image::from_values(*contrib.grid(), weighted_sum(weights, contrib)?)
}

/// Like [`weighted_ubp`] but lets overflow through as non-finite values.
pub(crate) fn weighted_sum(weights: &WeightTensor, contrib: &ContribTensor) -> Result<Array2<f64>> {
    check_weights(weights, contrib)?;
    let n = contrib.grid().n();
    let n_s = contrib.n_s();
    let b = contrib.values().as_slice().expect("contiguous contributions");
    let w = weights.values().as_standard_layout();
    let w = w.as_slice().expect("contiguous weights");
    let mut out = vec![0.0; n * n];
    out.par_iter_mut().enumerate().for_each(|(p, o)| {
        let range = p * n_s..(p + 1) * n_s;
        let mut acc = 0.0;
        for (wv, bv) in w[range.clone()].iter().zip(&b[range]) {
            acc += wv * wv * bv;
        }
        *o = acc;
    });
    Ok(Array2::from_shape_vec((n, n), out).unwrap())
}

/// Convenience wrapper that accepts coarse weights and raw data.
pub fn reconstruct(
    weights: &WeightTensor,
    data: &SensorData,
    grid: &ImageGrid,
    opts: &BackprojectOptions,
) -> Result<Image> {
    if weights.n_s() != data.detectors().len() {
        return Err(Error::shape(
            "weights vs data detectors",
            &[grid.n(), grid.n(), data.detectors().len()],
            weights.values().shape(),
        ));
    }
    let contrib = backproject_contrib(data, grid, opts)?;
    weighted_ubp(&weights.upsample(grid), &contrib)
}
