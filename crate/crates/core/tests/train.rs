mod common;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pat_ubp::phantom::{generate_phantom, PhantomParams};
use pat_ubp::recon::{backproject_contrib, BackprojectOptions, WeightTensor};
use pat_ubp::train::{
    grad, loss, loss_and_grad, sgd_train, LearningRate, LossKind, Silent, TrainConfig, TrainingPair,
};
use pat_ubp::{simulate, DetectorArray, Image, ImageGrid, Scenario, ScenarioLabel, SensorData, SimulationOptions, TimeGrid};

/// Data amplitude 0.05 and targets in [0.5, 1.5]: residuals stay well
/// above the contributions, so the O(h² b / (P − F)) truncation error of
/// central differences on the quartic loss is far below 1e-5.
fn gradient_instance(rng: &mut ChaCha8Rng) -> TrainingPair {
    let grid = ImageGrid::new(8, 0.9).unwrap();
    let time = TimeGrid::new(16, 3.0).unwrap();
    let det = DetectorArray::for_label(ScenarioLabel::LimitedSparse, 3, 1.0).unwrap();
    let data = SensorData::new(
        Array2::from_shape_fn((16, 3), |_| rng.random_range(-0.05..0.05)),
        time,
        det,
    )
    .unwrap();
    let target = Image::from_fn(grid, |_| rng.random_range(0.5..1.5));
    TrainingPair::new(&data, target, &BackprojectOptions::default()).unwrap()
}

fn random_pair(rng: &mut ChaCha8Rng, n: usize, n_s: usize, n_t: usize) -> TrainingPair {
    let grid = ImageGrid::new(n, 0.9).unwrap();
    let time = TimeGrid::new(n_t, 3.0).unwrap();
    let det = DetectorArray::for_label(ScenarioLabel::LimitedSparse, n_s, 1.0).unwrap();
    let data = SensorData::new(
        Array2::from_shape_fn((n_t, n_s), |_| rng.random_range(-1.0..1.0)),
        time,
        det,
    )
    .unwrap();
    let target = Image::from_fn(grid, |_| rng.random_range(0.0..1.0));
    TrainingPair::new(&data, target, &BackprojectOptions::default()).unwrap()
}

fn random_weights(rng: &mut ChaCha8Rng, grid: ImageGrid, n_s: usize) -> WeightTensor {
    let n = grid.n();
    WeightTensor::from_values(grid, Array3::from_shape_fn((n, n, n_s), |_| rng.random_range(0.5..1.5))).unwrap()
}

/// `(1/M) Σ ‖F − Σ_j W² b‖²` evaluated directly from the tensors.
fn brute_loss(w: &WeightTensor, pairs: &[TrainingPair]) -> f64 {
    let mut total = 0.0;
    for p in pairs {
        let (n, _, n_s) = p.contrib.values().dim();
        for i in 0..n {
            for j in 0..n {
                let rec: f64 = (0..n_s)
                    .map(|k| w.values()[[i, j, k]].powi(2) * p.contrib.values()[[i, j, k]])
                    .sum();
                total += (rec - p.target.values()[[i, j]]).powi(2);
            }
        }
    }
    total / pairs.len() as f64
}

#[test]
fn loss_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pairs: Vec<_> = (0..3).map(|_| random_pair(&mut rng, 8, 3, 16)).collect();
    let w = random_weights(&mut rng, *pairs[0].target.grid(), 3);
    let got = loss(&w, &pairs, LossKind::Squared).unwrap();
    let expect = brute_loss(&w, &pairs);
    assert!((got - expect).abs() <= 1e-12 * expect);
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let pair = gradient_instance(&mut rng);
    let w = random_weights(&mut rng, *pair.target.grid(), 3);
    let g = grad(&w, &pair, LossKind::Squared).unwrap();
    let pairs = vec![pair];
    let h = 1e-4;
    let mut checked = 0;
    for (idx, gv) in g.indexed_iter() {
        if gv.abs() <= 1e-8 {
            continue;
        }
        let mut wp = w.clone();
        wp.values_mut()[idx] += h;
        let mut wm = w.clone();
        wm.values_mut()[idx] -= h;
        let fd = (brute_loss(&wp, &pairs) - brute_loss(&wm, &pairs)) / (2.0 * h);
        assert!((fd - gv).abs() / gv.abs() < 1e-5, "{idx:?}: {fd} vs {gv}");
        checked += 1;
    }
    assert!(checked > 100);
}

#[test]
fn zero_data_gives_zero_gradient() {
    let grid = ImageGrid::new(8, 0.9).unwrap();
    let time = TimeGrid::new(16, 3.0).unwrap();
    let det = DetectorArray::for_label(ScenarioLabel::Sparse, 3, 1.0).unwrap();
    let data = SensorData::zeros(time, det);
    let target = Image::from_fn(grid, |p| p[0] + 2.0);
    let pair = TrainingPair::new(&data, target, &BackprojectOptions::default()).unwrap();
    let g = grad(&WeightTensor::ones(grid, 3), &pair, LossKind::Squared).unwrap();
    assert!(g.iter().all(|v| *v == 0.0));
}

#[test]
fn gradient_descent_on_one_sample_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let pair = random_pair(&mut rng, 8, 3, 16);
    let mut w = WeightTensor::ones(*pair.target.grid(), 3);
    let (mut current, _) = loss_and_grad(&w, &pair, LossKind::Squared).unwrap();
    let mut lr = 1.0;
    for _ in 0..20 {
        let g = grad(&w, &pair, LossKind::Squared).unwrap();
        loop {
            let mut next = w.clone();
            next.values_mut().zip_mut_with(&g, |a, b| *a -= lr * b);
            let l = loss_and_grad(&next, &pair, LossKind::Squared).unwrap().0;
            if l <= current {
                w = next;
                assert!(l <= current + 1e-12);
                current = l;
                break;
            }
            lr *= 0.5;
            assert!(lr > 1e-30);
        }
    }
}

#[test]
fn one_step_follows_scalar_recurrence() {
    // each (pixel, detector) entry evolves independently when n_s = 1
    let grid = ImageGrid::new(2, 0.5).unwrap();
    let time = TimeGrid::new(30, 3.0).unwrap();
    let det = DetectorArray::for_label(ScenarioLabel::Sparse, 1, 1.0).unwrap();
    let data = SensorData::new(
        Array2::from_shape_fn((30, 1), |(k, _)| (k as f64 * 0.3).sin()),
        time,
        det,
    )
    .unwrap();
    let target = Image::from_values(grid, Array2::from_shape_vec((2, 2), vec![0.3, -0.2, 1.0, 0.5]).unwrap()).unwrap();
    let b = backproject_contrib(&data, &grid, &BackprojectOptions::default()).unwrap();
    let pair = TrainingPair::from_contrib(b.clone(), target.clone()).unwrap();
    let w0 = WeightTensor::from_values(grid, Array3::from_shape_vec((2, 2, 1), vec![1.0, 0.7, 1.3, 0.9]).unwrap()).unwrap();
    let lr = 0.05;
    let cfg = TrainConfig {
        epochs: 1,
        learning_rate: LearningRate::Fixed(lr),
        init: pat_ubp::train::Init::Constant(0.0),
        ..Default::default()
    };
    // start from w0 by resuming from a file
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w0.patb");
    pat_ubp::io::patb::write_weights(&path, &w0).unwrap();
    let cfg = TrainConfig {
        init: pat_ubp::train::Init::Resume(path),
        ..cfg
    };
    let state = sgd_train(&vec![pair], &Vec::new(), &cfg, &mut Silent).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let w = w0.values()[[i, j, 0]] as f32 as f64;
            let bv = b.values()[[i, j, 0]];
            let f = target.values()[[i, j]];
            let expect = w - lr * 4.0 * w * bv * (w * w * bv - f);
            let got = state.weights.values()[[i, j, 0]];
            assert!((got - expect).abs() <= 1e-12 * expect.abs().max(1.0), "{got} vs {expect}");
        }
    }
}

#[test]
fn identical_runs_are_bitwise_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let pairs: Vec<_> = (0..6).map(|_| random_pair(&mut rng, 8, 3, 16)).collect();
    let cfg = TrainConfig {
        epochs: 4,
        shuffle_seed: 99,
        ..Default::default()
    };
    let a = sgd_train(&pairs, &pairs[..2].to_vec(), &cfg, &mut Silent).unwrap();
    let b = sgd_train(&pairs, &pairs[..2].to_vec(), &cfg, &mut Silent).unwrap();
    assert_eq!(a, b);
    let other = sgd_train(&pairs, &Vec::new(), &TrainConfig { shuffle_seed: 100, ..cfg }, &mut Silent).unwrap();
    assert_ne!(other.weights, a.weights);
}

#[test]
fn initial_heldout_loss_is_standard_backprojection_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let pairs: Vec<_> = (0..4).map(|_| random_pair(&mut rng, 8, 3, 16)).collect();
    let held = pairs[2..].to_vec();
    let cfg = TrainConfig {
        epochs: 1,
        ..Default::default()
    };
    let state = sgd_train(&pairs[..2].to_vec(), &held, &cfg, &mut Silent).unwrap();
    let expect: f64 = held
        .iter()
        .map(|p| {
            let rec = p.contrib.sum();
            rec.values().iter().zip(p.target.values()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum::<f64>()
        / 2.0;
    assert_eq!(state.initial_heldout_loss, Some(expect));
}

#[test]
fn desk_training_improves_heldout_loss() {
    let scenario = Scenario::standard(ScenarioLabel::LimitedSparse, 64, 20, 400).unwrap();
    let make = |seed: u64| {
        let f = generate_phantom(&PhantomParams::for_grid(seed, 64), scenario.grid).unwrap();
        let g = simulate(&f, &scenario, &SimulationOptions::default()).unwrap();
        TrainingPair::new(&g, f, &BackprojectOptions::default()).unwrap()
    };
    let train: Vec<_> = (0..40).map(make).collect();
    let held: Vec<_> = (1000..1010).map(make).collect();
    let state = sgd_train(&train, &held, &TrainConfig::default(), &mut Silent).unwrap();
    assert_eq!(state.heldout_loss.len(), 100);
    let initial = state.initial_heldout_loss.unwrap();
    assert!(*state.heldout_loss.last().unwrap() < initial);
}
