mod common;

use std::f64::consts::PI;

use common::{disc, first_arrival, oracle_trace, rel_l2, soft_disc};
use pat_ubp::forward::circular_mean;
use pat_ubp::geometry::{Arc, DetectorArray};
use pat_ubp::{simulate, Image, ImageGrid, Scenario, ScenarioLabel, SimulationOptions, TimeGrid};

fn full_circle(n: usize, n_s: usize, n_t: usize, directivity: bool) -> Scenario {
    Scenario::new(
        ScenarioLabel::Custom,
        ImageGrid::new(n, 1.0).unwrap(),
        DetectorArray::new(Arc::FullCircle, n_s, 1.0).unwrap(),
        TimeGrid::new(n_t, 3.0).unwrap(),
        directivity,
        1.0,
        0,
    )
    .unwrap()
}

#[test]
fn circular_mean_of_disc_matches_arc_fraction() {
    let grid = ImageGrid::new(256, 1.0).unwrap();
    let q = [0.1, -0.05];
    let rho = 0.3;
    let img = Image::from_fn(grid, |p| ((p[0] - q[0]).hypot(p[1] - q[1]) <= rho) as u8 as f64);
    let center = [-0.5, 0.3];
    let d = (center[0] - q[0]).hypot(center[1] - q[1]);
    for radius in [d - 0.2, d, d + 0.2] {
        let expect = ((d * d + radius * radius - rho * rho) / (2.0 * d * radius)).acos() / PI;
        let got = circular_mean(&img, center, radius, None, 8192).unwrap();
        assert!((got - expect).abs() < 0.01, "r={radius}: {got} vs {expect}");
    }
}

#[test]
fn no_signal_before_first_arrival() {
    let scenario = full_circle(128, 8, 400, true);
    let img = disc(scenario.grid, [0.0, 0.0], 0.1);
    let data = simulate(&img, &scenario, &SimulationOptions::default()).unwrap();
    let max = data.max_abs();
    let dt = scenario.time.dt();
    let dr = dt / 4.0;
    for (j, s) in scenario.detectors.positions().iter().enumerate() {
        let cutoff = first_arrival(&img, *s) - dt - dr;
        assert!(cutoff > 0.85);
        for k in 0..400 {
            if scenario.time.sample(k) < cutoff {
                assert!(data.values()[[k, j]].abs() <= 1e-6 * max);
            }
        }
    }
}

#[test]
fn simulation_is_linear() {
    let scenario = Scenario::standard(ScenarioLabel::LimitedSparse, 32, 5, 120).unwrap();
    let f1 = disc(scenario.grid, [0.2, 0.1], 0.3);
    let f2 = soft_disc(scenario.grid, [-0.3, -0.2], 0.25, 0.1);
    let (a, b) = (1.7, -0.4);
    let mut combo = f1.clone();
    combo.values_mut().zip_mut_with(f2.values(), |x, y| *x = a * *x + b * y);
    let opts = SimulationOptions::default();
    let g1 = simulate(&f1, &scenario, &opts).unwrap();
    let g2 = simulate(&f2, &scenario, &opts).unwrap();
    let g = simulate(&combo, &scenario, &opts).unwrap();
    let expect: Vec<f64> = g1.values().iter().zip(g2.values()).map(|(x, y)| a * x + b * y).collect();
    let got: Vec<f64> = g.values().iter().copied().collect();
    assert!(rel_l2(&got, &expect) < 1e-9);
}

#[test]
fn rotating_source_permutes_detectors() {
    let n_s = 16;
    let scenario = full_circle(96, n_s, 300, false);
    let step = 2.0 * PI / n_s as f64;
    let at = |angle: f64| {
        let c = [0.35 * angle.cos(), 0.35 * angle.sin()];
        soft_disc(scenario.grid, c, 0.25, 0.15)
    };
    let opts = SimulationOptions::default();
    let g0 = simulate(&at(0.3), &scenario, &opts).unwrap();
    let g1 = simulate(&at(0.3 + step), &scenario, &opts).unwrap();
    for j in 0..n_s {
        let a: Vec<f64> = g1.values().column((j + 1) % n_s).to_vec();
        let b: Vec<f64> = g0.values().column(j).to_vec();
        assert!(rel_l2(&a, &b) < 0.01, "detector {j}: {}", rel_l2(&a, &b));
    }
}

#[test]
fn directivity_scales_peak_by_cos_squared() {
    let grid = ImageGrid::new(128, 1.0).unwrap();
    let det = DetectorArray::new(Arc::Span { start: 0.0, end: 1e-9 }, 1, 1.0).unwrap();
    let s = det.positions()[0];
    let scenario = Scenario::new(
        ScenarioLabel::Custom,
        grid,
        det,
        TimeGrid::new(400, 3.0).unwrap(),
        true,
        1.0,
        0,
    )
    .unwrap();
    let peak = |alpha: f64| {
        let c = [s[0] - 0.8 * alpha.cos(), s[1] + 0.8 * alpha.sin()];
        let img = Image::from_fn(grid, |p| {
            (-((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)) / (2.0 * 0.03f64.powi(2))).exp()
        });
        simulate(&img, &scenario, &SimulationOptions::default())
            .unwrap()
            .max_abs()
    };
    let p0 = peak(0.0);
    for alpha in [PI / 6.0, PI / 3.0] {
        let ratio = peak(alpha) / p0;
        let expect = alpha.cos().powi(2);
        assert!((ratio - expect).abs() < 0.05 * expect, "alpha {alpha}: {ratio} vs {expect}");
    }
}

#[test]
fn disc_waveforms_match_fine_quadrature() {
    let scenario = Scenario::standard(ScenarioLabel::LimitedView, 64, 6, 200).unwrap();
    let img = disc(scenario.grid, [0.15, -0.1], 0.35);
    let data = simulate(&img, &scenario, &SimulationOptions::default()).unwrap();
    for j in [0, 3, 5] {
        let s = scenario.detectors.positions()[j];
        let nu = scenario.detectors.normals()[j];
        let oracle = oracle_trace(&img, s, Some(nu), &scenario.time, 4);
        let err = rel_l2(&data.values().column(j).to_vec(), &oracle);
        assert!(err < 0.01, "detector {j}: {err}");
    }
}
