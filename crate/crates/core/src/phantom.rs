//! Randomized Shepp-Logan style sources.
//!
//! A phantom is built from the modified Shepp-Logan ellipse set with
//! jittered centres and amplitudes, a global rotation, a handful of small
//! high-contrast ellipses, and finally a smooth random elastic warp. The
//! result is nonnegative and vanishes outside `0.9 * extent`.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::ImageGrid;
use crate::image::{bilinear, Image};

/// Phantoms vanish outside this fraction of the grid extent.
pub const SUPPORT_FRACTION: f64 = 0.9;

/// Scale applied to the canonical layout so that it fits inside the support
/// disc with room for jitter and warping.
pub const LAYOUT_SCALE: f64 = 0.85;

const MIN_GRID: usize = 16;

/// Ellipse with centre, semi-axes and rotation (radians, counter-clockwise
/// from the x axis to the first semi-axis).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub amplitude: f64,
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    pub angle: f64,
}

impl Ellipse {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        let (s, c) = self.angle.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.semi_axes[0]).powi(2) + (v / self.semi_axes[1]).powi(2) <= 1.0
    }
}

/// Modified Shepp-Logan ellipses on the unit square:
/// `(amplitude, a, b, x0, y0, angle in degrees)`.
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// The canonical layout scaled by [`LAYOUT_SCALE`] into a grid of the
/// given extent.
pub fn canonical_ellipses(extent: f64) -> Vec<Ellipse> {
    let s = LAYOUT_SCALE * extent;
    SHEPP_LOGAN
        .iter()
        .map(|&(amp, a, b, x, y, deg)| Ellipse {
            amplitude: amp,
            center: [s * x, s * y],
            semi_axes: [s * a, s * b],
            angle: deg.to_radians(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomParams {
    pub seed: u64,
    /// Number of canonical ellipses used, at most 10.
    pub n_ellipses_base: usize,
    /// Inclusive range for the number of small added ellipses.
    pub n_fine: (usize, usize),
    /// Range of the multiplicative amplitude factor per ellipse.
    pub amp_range: (f64, f64),
    /// Maximum centre shift per coordinate, as a fraction of the extent.
    pub pos_jitter: f64,
    /// Global rotation drawn from `[-rot_range, rot_range]`.
    pub rot_range: f64,
    /// Maximum warp displacement in pixels.
    pub elastic_alpha: f64,
    /// Smoothing width of the warp field in pixels.
    pub elastic_sigma: f64,
}

impl PhantomParams {
    /// Default recipe scaled to a grid of side `n`.
    pub fn for_grid(seed: u64, n: usize) -> Self {
        let scale = n as f64 / 256.0;
        Self {
            seed,
            n_ellipses_base: SHEPP_LOGAN.len(),
            n_fine: (3, 8),
            amp_range: (0.6, 1.4),
            pos_jitter: 0.05,
            rot_range: PI,
            elastic_alpha: 3.0 * scale,
            elastic_sigma: 8.0 * scale,
        }
    }

    /// No randomness at all: the scaled canonical layout.
    pub fn canonical(n: usize) -> Self {
        Self {
            n_fine: (0, 0),
            amp_range: (1.0, 1.0),
            pos_jitter: 0.0,
            rot_range: 0.0,
            elastic_alpha: 0.0,
            ..Self::for_grid(0, n)
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.n_ellipses_base <= SHEPP_LOGAN.len()
            && self.n_fine.0 <= self.n_fine.1
            && self.amp_range.0.is_finite()
            && self.amp_range.1.is_finite()
            && self.amp_range.0 <= self.amp_range.1
            && self.pos_jitter.is_finite()
            && self.pos_jitter >= 0.0
            && self.rot_range.is_finite()
            && self.rot_range >= 0.0
            && self.elastic_alpha.is_finite()
            && self.elastic_alpha >= 0.0
            && self.elastic_sigma.is_finite()
            && self.elastic_sigma > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid phantom parameters {self:?}")))
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Draws the full ellipse set for one phantom; also returns the seed of
/// the warp field so that all randomness stays tied to `params.seed`.
pub fn random_ellipses(params: &PhantomParams, extent: f64) -> Result<(Vec<Ellipse>, u64)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut ellipses = canonical_ellipses(extent);
    ellipses.truncate(params.n_ellipses_base);

    let (lo, hi) = params.amp_range;
    let mut factors: Vec<f64> = (0..ellipses.len()).map(|_| uniform(&mut rng, lo, hi)).collect();
    // outer shell and its interior share a factor so the body stays positive
    if factors.len() >= 2 {
        factors[1] = factors[0];
    }
    let jitter = params.pos_jitter * extent;
    let rotation = uniform(&mut rng, -params.rot_range, params.rot_range);
    let (rs, rc) = rotation.sin_cos();
    for (e, f) in ellipses.iter_mut().zip(&factors) {
        e.amplitude *= f;
        let cx = e.center[0] + uniform(&mut rng, -jitter, jitter);
        let cy = e.center[1] + uniform(&mut rng, -jitter, jitter);
        e.center = [rc * cx - rs * cy, rs * cx + rc * cy];
        e.angle += rotation;
    }

    let n_fine = if params.n_fine.0 == params.n_fine.1 {
        params.n_fine.0
    } else {
        rng.random_range(params.n_fine.0..=params.n_fine.1)
    };
    for _ in 0..n_fine {
        let r = 0.7 * extent * rng.random::<f64>().sqrt();
        let phi = rng.random_range(0.0..2.0 * PI);
        ellipses.push(Ellipse {
            amplitude: rng.random_range(0.3..1.0),
            center: [r * phi.cos(), r * phi.sin()],
            semi_axes: [
                extent * rng.random_range(0.01..0.04),
                extent * rng.random_range(0.01..0.04),
            ],
            angle: rng.random_range(0.0..PI),
        });
    }
    Ok((ellipses, rng.random()))
}

/// Point-sampled sum of ellipse amplitudes, clamped at zero.
pub fn rasterize(ellipses: &[Ellipse], grid: ImageGrid) -> Image {
    Image::from_fn(grid, |p| {
        ellipses
            .iter()
            .filter(|e| e.contains(p))
            .map(|e| e.amplitude)
            .sum::<f64>()
            .max(0.0)
    })
}

fn clip_support(img: &mut Image) {
    let grid = *img.grid();
    let limit = SUPPORT_FRACTION * grid.extent();
    let n = grid.n();
    let values = img.values_mut();
    for i in 0..n {
        for j in 0..n {
            let c = grid.center(i, j);
            if c[0].hypot(c[1]) > limit {
                values[[i, j]] = 0.0;
            }
        }
    }
}

pub fn generate_phantom(params: &PhantomParams, grid: ImageGrid) -> Result<Image> {
    if grid.n() < MIN_GRID {
        return Err(Error::Config(format!(
            "phantoms need a grid of at least {MIN_GRID} pixels per side, got {}",
            grid.n()
        )));
    }
    let (ellipses, warp_seed) = random_ellipses(params, grid.extent())?;
    let img = rasterize(&ellipses, grid);
    let mut img = elastic_deform(&img, warp_seed, params.elastic_alpha, params.elastic_sigma)?;
    clip_support(&mut img);
    Ok(img)
}

/// Normalized, truncated Gaussian kernel.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Separable Gaussian blur with symmetric boundary extension.
pub(crate) fn gaussian_blur(field: &Array2<f64>, sigma: f64) -> Array2<f64> {
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let (rows, cols) = field.dim();
    let mut tmp = Array2::<f64>::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            tmp[[i, j]] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * field[[i, reflect(j as isize + k as isize - r, cols)]])
                .sum();
        }
    }
    let mut out = Array2::<f64>::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            out[[i, j]] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[[reflect(i as isize + k as isize - r, rows), j]])
                .sum();
        }
    }
    out
}

/// Smooth random displacement field in pixels, `(row, col)` components,
/// with maximum magnitude `alpha`.
pub fn displacement_field(
    n: usize,
    seed: u64,
    alpha: f64,
    sigma: f64,
) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw_row = Array2::from_shape_simple_fn((n, n), || rng.random_range(-1.0..1.0));
    let raw_col = Array2::from_shape_simple_fn((n, n), || rng.random_range(-1.0..1.0));
    let mut d_row = gaussian_blur(&raw_row, sigma);
    let mut d_col = gaussian_blur(&raw_col, sigma);
    let max = d_row
        .iter()
        .zip(d_col.iter())
        .map(|(a, b)| a.hypot(*b))
        .fold(0.0, f64::max);
    let scale = if max > 0.0 { alpha / max } else { 0.0 };
    d_row.mapv_inplace(|v| v * scale);
    d_col.mapv_inplace(|v| v * scale);
    (d_row, d_col)
}

/// Warps `img` by a Gaussian-smoothed random displacement field, resampling
/// bilinearly with zero outside the grid.
pub fn elastic_deform(img: &Image, seed: u64, alpha: f64, sigma: f64) -> Result<Image> {
    if !(alpha.is_finite() && alpha >= 0.0) || !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Config(format!(
            "elastic deformation needs alpha >= 0 and sigma > 0, got {alpha}, {sigma}"
        )));
    }
    if alpha == 0.0 {
        return Ok(img.clone());
    }
    let n = img.grid().n();
    let (d_row, d_col) = displacement_field(n, seed, alpha, sigma);
    let src = img.values();
    let out = Array2::from_shape_fn((n, n), |(i, j)| {
        bilinear(src, i as f64 + d_row[[i, j]], j as f64 + d_col[[i, j]])
    });
    Image::from_values(*img.grid(), out)
}
