//! The on-disk workflow behind the `patlearn` binary: simulate a dataset,
//! train, evaluate and export, all inside one directory.

use std::path::Path;

use pat_ubp::cli::{self, TrainArgs};
use pat_ubp::eval::{format_table, ErrorNorm};
use pat_ubp::io::config::write_scenario;
use pat_ubp::io::dataset::Split;
use pat_ubp::train::{LearningRate, TrainConfig};
use pat_ubp::{Scenario, ScenarioLabel, SimulationOptions};

fn main() -> pat_ubp::Result<()> {
    let root = Path::new("pipeline_demo");
    let scenario_cfg = root.join("scenario.cfg");
    std::fs::create_dir_all(root).map_err(|e| pat_ubp::Error::Io { path: root.into(), source: e })?;
    write_scenario(&scenario_cfg, &Scenario::standard(ScenarioLabel::LimitedView, 32, 16, 200)?)?;

    let opts = SimulationOptions::default();
    cli::cmd_gen_data(&scenario_cfg, &root.join("train"), 24, 0, Split::Train, &opts)?;
    cli::cmd_gen_data(&scenario_cfg, &root.join("test"), 6, 50_000, Split::Test, &opts)?;

    let state = cli::cmd_train(&TrainArgs {
        train_dir: root.join("train"),
        heldout_dir: Some(root.join("test")),
        scenario: Some(scenario_cfg.clone()),
        config: TrainConfig {
            epochs: 20,
            checkpoint_every: 5,
            learning_rate: LearningRate::Auto,
            ..Default::default()
        },
        out_dir: root.join("run"),
        memory_budget_bytes: 1 << 30,
        progress: false,
    })?;
    println!("trained {} epochs at lr {:e}", state.epoch, state.learning_rate);

    let weights = root.join("run").join(cli::FINAL_WEIGHTS);
    let report = cli::cmd_evaluate(
        &root.join("test"),
        Some(&weights),
        Some(&scenario_cfg),
        &root.join("report.csv"),
        ErrorNorm::Relative,
    )?;
    print!("{}", format_table(&[report]));

    cli::cmd_reconstruct(
        &root.join("test").join("data_00000.patb"),
        Some(&weights),
        &scenario_cfg,
        &root.join("recon_00000"),
    )?;
    cli::cmd_export_weights(&weights, 8, Some(&scenario_cfg), &root.join("weights_det8.pgm"))?;
    println!("outputs in {}", root.display());
    Ok(())
}
