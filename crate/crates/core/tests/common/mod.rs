#![allow(dead_code)]

use ndarray::Array2;
use pat_ubp::{Image, ImageGrid, TimeGrid};

/// Bilinear value of pixel data at a physical point, zero outside the grid.
/// Pixel `(i, j)` sits at `(-e + (j + ½) h, e - (i + ½) h)`.
pub fn sample(values: &Array2<f64>, grid: &ImageGrid, p: [f64; 2]) -> f64 {
    let n = grid.n() as isize;
    let h = grid.spacing();
    let e = grid.extent();
    let u = (e - p[1]) / h - 0.5;
    let v = (p[0] + e) / h - 0.5;
    let (i0, j0) = (u.floor(), v.floor());
    let (a, b) = (u - i0, v - j0);
    let (i0, j0) = (i0 as isize, j0 as isize);
    let get = |i: isize, j: isize| {
        if (0..n).contains(&i) && (0..n).contains(&j) {
            values[[i as usize, j as usize]]
        } else {
            0.0
        }
    };
    (1.0 - a) * ((1.0 - b) * get(i0, j0) + b * get(i0, j0 + 1))
        + a * ((1.0 - b) * get(i0 + 1, j0) + b * get(i0 + 1, j0 + 1))
}

pub fn disc(grid: ImageGrid, center: [f64; 2], radius: f64) -> Image {
    Image::from_fn(grid, |p| {
        if (p[0] - center[0]).hypot(p[1] - center[1]) <= radius {
            1.0
        } else {
            0.0
        }
    })
}

/// Disc with a raised-cosine edge of the given width.
pub fn soft_disc(grid: ImageGrid, center: [f64; 2], radius: f64, edge: f64) -> Image {
    Image::from_fn(grid, |p| {
        let d = (p[0] - center[0]).hypot(p[1] - center[1]);
        if d <= radius - edge {
            1.0
        } else if d >= radius {
            0.0
        } else {
            0.5 * (1.0 + (std::f64::consts::PI * (d - radius + edge) / edge).cos())
        }
    })
}

/// Pressure trace at detector `s` by brute-force quadrature: the mean
/// over circles on a radial grid `refine` times finer than the solver's
/// (`cT / (4 n_t)`) with `refine * 4n` angles, then
/// `V(t) = ∫_0^{π/2} t sinθ m(t sinθ) dθ` by a dense midpoint rule, then
/// central differences in time. Unit sound speed.
pub fn oracle_trace(
    img: &Image,
    s: [f64; 2],
    normal: Option<[f64; 2]>,
    time: &TimeGrid,
    refine: usize,
) -> Vec<f64> {
    let grid = img.grid();
    let n_r = time.n_t() * 4 * refine;
    let dr = time.t_final() / n_r as f64;
    let n_a = 4 * grid.n() * refine;
    let dirs: Vec<([f64; 2], f64)> = (0..n_a)
        .map(|l| {
            let a = 2.0 * std::f64::consts::PI * l as f64 / n_a as f64;
            let w = [a.cos(), a.sin()];
            let weight = match normal {
                None => 1.0,
                Some(nu) => {
                    let c = -(nu[0] * w[0] + nu[1] * w[1]);
                    if c > 0.0 {
                        c * c
                    } else {
                        0.0
                    }
                }
            };
            (w, weight)
        })
        .collect();
    let m: Vec<f64> = (0..=n_r)
        .map(|i| {
            let r = i as f64 * dr;
            if r == 0.0 {
                return sample(img.values(), grid, s);
            }
            dirs.iter()
                .filter(|(_, wt)| *wt > 0.0)
                .map(|(w, wt)| wt * sample(img.values(), grid, [s[0] + r * w[0], s[1] + r * w[1]]))
                .sum::<f64>()
                / n_a as f64
        })
        .collect();
    let m_at = |r: f64| {
        let x = r / dr;
        let i = (x.floor() as usize).min(n_r - 1);
        let f = x - i as f64;
        (1.0 - f) * m[i] + f * m[i + 1]
    };
    let n_theta = 4000;
    let v: Vec<f64> = (1..=time.n_t())
        .map(|k| {
            let t = time.sample(k - 1);
            let h = std::f64::consts::FRAC_PI_2 / n_theta as f64;
            (0..n_theta)
                .map(|q| {
                    let th = (q as f64 + 0.5) * h;
                    t * th.sin() * m_at(t * th.sin())
                })
                .sum::<f64>()
                * h
        })
        .collect();
    let dt = time.dt();
    let n = v.len();
    (0..n)
        .map(|k| match k {
            0 => (v[1] - v[0]) / dt,
            k if k == n - 1 => (v[n - 1] - v[n - 2]) / dt,
            k => (v[k + 1] - v[k - 1]) / (2.0 * dt),
        })
        .collect()
}

pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Travel distance below which the discretized source cannot be seen from
/// `s`: nearest nonzero pixel centre minus the bilinear footprint.
pub fn first_arrival(img: &Image, s: [f64; 2]) -> f64 {
    let grid = img.grid();
    let mut best = f64::INFINITY;
    for ((i, j), v) in img.values().indexed_iter() {
        if *v != 0.0 {
            let c = grid.center(i, j);
            best = best.min((c[0] - s[0]).hypot(c[1] - s[1]));
        }
    }
    best - std::f64::consts::SQRT_2 * grid.spacing()
}
