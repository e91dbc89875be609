//! Learns backprojection weights for the limited-view sparse scenario on a
//! small grid and compares against the ordinary backprojection.

use pat_ubp::eval::{evaluate, format_table, ErrorNorm};
use pat_ubp::io::pgm;
use pat_ubp::phantom::{generate_phantom, PhantomParams};
use pat_ubp::train::{sgd_train, EpochRecord, TrainConfig, TrainObserver, TrainingPair};
use pat_ubp::{simulate, BackprojectOptions, Scenario, ScenarioLabel, SimulationOptions, WeightTensor};

struct Progress;

impl TrainObserver for Progress {
    fn on_epoch(&mut self, r: &EpochRecord, _: &WeightTensor) -> pat_ubp::Result<()> {
        if r.epoch.is_multiple_of(5) {
            println!(
                "epoch {:3}  train {:.4}  held-out {:.4}",
                r.epoch,
                r.train_loss,
                r.heldout_loss.unwrap_or(f64::NAN)
            );
        }
        Ok(())
    }
}

fn pairs(scenario: &Scenario, first_seed: u64, count: usize) -> pat_ubp::Result<Vec<TrainingPair>> {
    (0..count as u64)
        .map(|i| {
            let f = generate_phantom(&PhantomParams::for_grid(first_seed + i, scenario.grid.n()), scenario.grid)?;
            let g = simulate(&f, scenario, &SimulationOptions::default())?;
            TrainingPair::new(&g, f, &BackprojectOptions::default())
        })
        .collect()
}

fn main() -> pat_ubp::Result<()> {
    let scenario = Scenario::standard(ScenarioLabel::LimitedSparse, 32, 20, 200)?;
    let train = pairs(&scenario, 0, 40)?;
    let test = pairs(&scenario, 10_000, 10)?;
    let cfg = TrainConfig {
        epochs: 30,
        ..Default::default()
    };
    let state = sgd_train(&train, &test, &cfg, &mut Progress)?;
    println!("learning rate {:e}", state.learning_rate);

    let report = evaluate(Some(&state.weights), &test, scenario.label, ErrorNorm::Relative)?;
    print!("{}", format_table(&[report]));
    let slice = state.weights.slice(10)?;
    pgm::write(std::path::Path::new("weights_detector10.pgm"), slice.values())?;
    Ok(())
}
