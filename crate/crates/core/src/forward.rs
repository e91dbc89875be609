//! Forward operator: pressure traces at the detectors for a given source.
//!
//! For each detector `s` the circular means `m(s, r)` of the source are
//! tabulated on a fine radial grid, combined into the Abel-type integral
//! `V(ρ) = ∫_0^ρ r m(s, r) / √(ρ² − r²) dr` with the square-root singularity
//! integrated exactly on each piece, and differentiated in time.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::geometry::{directivity, DetectorArray, Scenario, TimeGrid};
use crate::image::Image;

/// Pressure samples, indexed `[time, detector]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorData {
    values: Array2<f64>,
    time: TimeGrid,
    detectors: DetectorArray,
}

impl SensorData {
    pub fn new(values: Array2<f64>, time: TimeGrid, detectors: DetectorArray) -> Result<Self> {
        let expected = [time.n_t(), detectors.len()];
        if values.shape() != expected {
            return Err(Error::shape("sensor data", &expected, values.shape()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("sensor data contains non-finite values".into()));
        }
        Ok(Self {
            values,
            time,
            detectors,
        })
    }

    pub fn zeros(time: TimeGrid, detectors: DetectorArray) -> Self {
        Self {
            values: Array2::zeros((time.n_t(), detectors.len())),
            time,
            detectors,
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn detectors(&self) -> &DetectorArray {
        &self.detectors
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Quadrature resolution of the forward solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    /// Angular nodes per circular mean. `None` means `4 * n`.
    pub n_angles: Option<usize>,
    /// Radial nodes per time step.
    pub n_r_per_dt: usize,
    /// Standard deviation of additive Gaussian noise relative to the
    /// maximum absolute signal.
    pub noise: f64,
    pub noise_seed: u64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            n_angles: None,
            n_r_per_dt: 4,
            noise: 0.0,
            noise_seed: 0,
        }
    }
}

/// Mean of `img` over the circle of radius `radius` around `center`,
/// weighted by the detector directivity when `normal` is given.
///
/// Uses the periodic trapezoid rule with `n_angles` nodes.
pub fn circular_mean(
    img: &Image,
    center: [f64; 2],
    radius: f64,
    normal: Option<[f64; 2]>,
    n_angles: usize,
) -> Result<f64> {
    if n_angles < 8 {
        return Err(Error::Config(format!("circular mean needs at least 8 nodes, got {n_angles}")));
    }
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(Error::Config(format!("circular mean radius must be >= 0, got {radius}")));
    }
    Ok(circular_mean_unchecked(img, center, radius, normal, &unit_circle(n_angles)))
}

fn unit_circle(n_angles: usize) -> Vec<[f64; 2]> {
    (0..n_angles)
        .map(|l| {
            let a = TAU * l as f64 / n_angles as f64;
            [a.cos(), a.sin()]
        })
        .collect()
}

fn circular_mean_unchecked(
    img: &Image,
    center: [f64; 2],
    radius: f64,
    normal: Option<[f64; 2]>,
    nodes: &[[f64; 2]],
) -> f64 {
    if radius == 0.0 {
        // r -> 0 limit; the directivity is taken head-on
        return img.sample(center);
    }
    let sum: f64 = match normal {
        None => nodes
            .iter()
            .map(|w| img.sample([center[0] + radius * w[0], center[1] + radius * w[1]]))
            .sum(),
        Some(nu) => nodes
            .iter()
            .map(|w| {
                let phi = directivity(nu, *w);
                if phi == 0.0 {
                    0.0
                } else {
                    phi * img.sample([center[0] + radius * w[0], center[1] + radius * w[1]])
                }
            })
            .sum(),
    };
    sum / nodes.len() as f64
}

/// `V(ρ_k)` for `ρ_k = k * n_per_step * dr`, `k = 1..=n_steps`, from samples
/// `m_i = M(i * dr)` of a piecewise linear `M`.
pub(crate) fn abel_integrals(m: &[f64], dr: f64, n_per_step: usize, n_steps: usize) -> Vec<f64> {
    (1..=n_steps)
        .map(|k| {
            let last = k * n_per_step;
            let rho = last as f64 * dr;
            let mut total = 0.0;
            let mut asin_lo = 0.0;
            let mut sqrt_lo = rho;
            for i in 0..last {
                let r_hi = (i + 1) as f64 * dr;
                let x = (r_hi / rho).min(1.0);
                let asin_hi = x.asin();
                let sqrt_hi = if i + 1 == last {
                    0.0
                } else {
                    ((rho - r_hi) * (rho + r_hi)).max(0.0).sqrt()
                };
                let slope = (m[i + 1] - m[i]) / dr;
                let r_lo = i as f64 * dr;
                total += (m[i] - slope * r_lo) * (asin_hi - asin_lo) + slope * (sqrt_lo - sqrt_hi);
                asin_lo = asin_hi;
                sqrt_lo = sqrt_hi;
            }
            total
        })
        .collect()
}

/// Central differences with one-sided stencils at both ends.
pub(crate) fn differentiate(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|k| {
            if k == 0 {
                (v[1] - v[0]) / h
            } else if k == n - 1 {
                (v[n - 1] - v[n - 2]) / h
            } else {
                (v[k + 1] - v[k - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// Simulates the (optionally directional) pressure traces of `img`.
pub fn simulate(img: &Image, scenario: &Scenario, opts: &SimulationOptions) -> Result<SensorData> {
    if img.grid() != &scenario.grid {
        let (a, b) = (scenario.grid.n(), img.grid().n());
        return Err(Error::shape("simulate: image grid", &[a, a], &[b, b]));
    }
    if opts.n_r_per_dt == 0 {
        return Err(Error::Config("n_r_per_dt must be at least 1".into()));
    }
    let n_angles = opts.n_angles.unwrap_or(4 * scenario.grid.n());
    if n_angles < 8 {
        return Err(Error::Config(format!("n_angles must be at least 8, got {n_angles}")));
    }
    let time = scenario.time;
    let c = scenario.sound_speed;
    let reach = c * time.t_final();
    let needed = scenario.max_travel_distance();
    if needed > reach {
        return Err(Error::Config(format!(
            "radial grid covers distances up to c*T = {reach}, but the grid reaches {needed} from a detector"
        )));
    }
    let n_r = time.n_t() * opts.n_r_per_dt;
    let dr = reach / n_r as f64;
    let nodes = unit_circle(n_angles);
    let detectors = &scenario.detectors;

    let columns: Vec<Vec<f64>> = (0..detectors.len())
        .into_par_iter()
        .map(|j| {
            let s = detectors.positions()[j];
            let normal = scenario.directivity_enabled.then(|| detectors.normals()[j]);
            let m: Vec<f64> = (0..=n_r)
                .map(|i| {
                    let r = i as f64 * dr;
                    r * circular_mean_unchecked(img, s, r, normal, &nodes)
                })
                .collect();
            let v = abel_integrals(&m, dr, opts.n_r_per_dt, time.n_t());
            // u(t) = dV/dρ at ρ = c t
            differentiate(&v, c * time.dt())
        })
        .collect();

    let mut values = Array2::zeros((time.n_t(), detectors.len()));
    for (j, col) in columns.iter().enumerate() {
        for (k, v) in col.iter().enumerate() {
            values[[k, j]] = *v;
        }
    }
    if opts.noise > 0.0 {
        let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let normal = Normal::new(0.0, opts.noise * max)
            .map_err(|e| Error::Config(format!("noise level: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.noise_seed);
        values.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    }
    SensorData::new(values, time, detectors.clone())
}
