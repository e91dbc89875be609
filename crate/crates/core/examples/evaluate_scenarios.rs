//! Table of mean relative errors, ordinary vs learned backprojection, for
//! the three measurement scenarios.
//!
//! ```text
//! cargo run --release --example evaluate_scenarios -- [n] [train] [test] [epochs]
//! ```
//!
//! `64 150 30 100` is the desk-scale protocol (a few minutes per scenario).

use pat_ubp::eval::{evaluate, format_table, ErrorNorm};
use pat_ubp::phantom::{generate_phantom, PhantomParams};
use pat_ubp::train::{sgd_train, Silent, TrainConfig, TrainingPair};
use pat_ubp::{simulate, BackprojectOptions, Scenario, ScenarioLabel, SimulationOptions};

fn arg(args: &[String], i: usize, default: usize) -> usize {
    args.get(i).map_or(default, |v| v.parse().expect("integer argument"))
}

fn main() -> pat_ubp::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n = arg(&args, 0, 32);
    let n_train = arg(&args, 1, 40);
    let n_test = arg(&args, 2, 10);
    let epochs = arg(&args, 3, 30);

    let mut reports = Vec::new();
    for (label, n_s) in [
        (ScenarioLabel::LimitedView, 40),
        (ScenarioLabel::Sparse, 20),
        (ScenarioLabel::LimitedSparse, 20),
    ] {
        let scenario = Scenario::standard(label, n, n_s, 400)?;
        let make = |seed: u64| -> pat_ubp::Result<TrainingPair> {
            let f = generate_phantom(&PhantomParams::for_grid(seed, n), scenario.grid)?;
            let g = simulate(&f, &scenario, &SimulationOptions::default())?;
            TrainingPair::new(&g, f, &BackprojectOptions::default())
        };
        let train: Vec<_> = (0..n_train as u64).map(make).collect::<pat_ubp::Result<_>>()?;
        let test: Vec<_> = (0..n_test as u64).map(|i| make(1_000_000 + i)).collect::<pat_ubp::Result<_>>()?;
        let cfg = TrainConfig {
            epochs,
            ..Default::default()
        };
        let state = sgd_train(&train, &Vec::new(), &cfg, &mut Silent)?;
        reports.push(evaluate(Some(&state.weights), &test, label, ErrorNorm::Relative)?);
        eprintln!("{label} done");
    }
    print!("{}", format_table(&reports));
    Ok(())
}
