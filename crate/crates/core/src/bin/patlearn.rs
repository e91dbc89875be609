use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use pat_ubp::cli;
use pat_ubp::eval::{format_table, ErrorNorm};
use pat_ubp::io::config::read_train_config;
use pat_ubp::io::dataset::Split;
use pat_ubp::train::{Init, LearningRate, TrainConfig};
use pat_ubp::SimulationOptions;

#[derive(Parser)]
#[command(name = "patlearn", version, about = "Photoacoustic reconstruction with learned UBP weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (key = value)
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Base seed (default 0); for `train`, overrides the config's shuffle seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output file or directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset of phantom/data pairs
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value = "train")]
        split: Split,
        /// Gaussian noise level relative to the peak absolute signal
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Learn weights by SGD
    Train {
        #[command(flatten)]
        common: Common,
        /// Training dataset directory
        #[arg(long)]
        train: PathBuf,
        /// Held-out dataset directory
        #[arg(long)]
        heldout: Option<PathBuf>,
        /// Training config file; flags below override it
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Learning rate or `auto`
        #[arg(long)]
        lr: Option<LearningRate>,
        /// `ones`, `const:<value>` or `resume:<path>`
        #[arg(long)]
        init: Option<Init>,
        #[arg(long)]
        checkpoint_every: Option<usize>,
        #[arg(long, default_value_t = 2048)]
        memory_budget_mb: usize,
        #[arg(long)]
        quiet: bool,
    },
    /// Reconstruct one data file
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, conflicts_with = "ones", required_unless_present = "ones")]
        weights: Option<PathBuf>,
        /// Use all-one weights (ordinary backprojection)
        #[arg(long)]
        ones: bool,
    },
    /// Report relative errors on a test set
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Report squared error ratios
        #[arg(long)]
        squared: bool,
    },
    /// Export one detector's weight slice as PGM
    ExportWeights {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        detector: usize,
    },
    /// Generate one phantom
    Phantom {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn needs_scenario(&self) -> Option<&Common> {
        match self {
            Command::GenData { common, .. }
            | Command::Reconstruct { common, .. }
            | Command::Phantom { common } => Some(common),
            _ => None,
        }
    }
}

fn required(scenario: Option<PathBuf>) -> PathBuf {
    scenario.expect("checked before dispatch")
}

fn run(command: Command) -> pat_ubp::Result<()> {
    match command {
        Command::GenData {
            common,
            count,
            split,
            noise,
        } => {
            let seed = common.seed.unwrap_or(0);
            let opts = SimulationOptions {
                noise,
                noise_seed: seed,
                ..Default::default()
            };
            let m = cli::cmd_gen_data(&required(common.scenario), &common.out, count, seed, split, &opts)?;
            println!("wrote {} samples to {}", m.count(), common.out.display());
        }
        Command::Train {
            common,
            train,
            heldout,
            config,
            epochs,
            lr,
            init,
            checkpoint_every,
            memory_budget_mb,
            quiet,
        } => {
            let mut cfg = match config {
                Some(p) => read_train_config(&p)?,
                None => TrainConfig::default(),
            };
            cfg.shuffle_seed = common.seed.unwrap_or(cfg.shuffle_seed);
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.learning_rate = lr.unwrap_or(cfg.learning_rate);
            cfg.init = init.unwrap_or(cfg.init);
            cfg.checkpoint_every = checkpoint_every.unwrap_or(cfg.checkpoint_every);
            let state = cli::cmd_train(&cli::TrainArgs {
                train_dir: train,
                heldout_dir: heldout,
                scenario: common.scenario,
                config: cfg,
                out_dir: common.out.clone(),
                memory_budget_bytes: memory_budget_mb.saturating_mul(1 << 20),
                progress: !quiet,
            })?;
            println!(
                "trained {} epochs (lr {:e}); weights in {}",
                state.epoch,
                state.learning_rate,
                common.out.display()
            );
        }
        Command::Reconstruct {
            common,
            data,
            weights,
            ones: _,
        } => {
            cli::cmd_reconstruct(&data, weights.as_deref(), &required(common.scenario), &common.out)?;
        }
        Command::Evaluate {
            common,
            test,
            weights,
            squared,
        } => {
            let norm = if squared {
                ErrorNorm::RelativeSquared
            } else {
                ErrorNorm::Relative
            };
            let report = cli::cmd_evaluate(
                &test,
                weights.as_deref(),
                common.scenario.as_deref(),
                &common.out,
                norm,
            )?;
            print!("{}", format_table(&[report]));
        }
        Command::ExportWeights {
            common,
            weights,
            detector,
        } => {
            cli::cmd_export_weights(&weights, detector, common.scenario.as_deref(), &common.out)?;
        }
        Command::Phantom { common } => {
            cli::cmd_phantom(&required(common.scenario), common.seed.unwrap_or(0), &common.out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let parsed = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if parsed.command.needs_scenario().is_some_and(|c| c.scenario.is_none()) {
        let _ = Cli::command()
            .error(ErrorKind::MissingRequiredArgument, "--scenario <SCENARIO> is required for this command")
            .print();
        return ExitCode::from(1);
    }
    match run(parsed.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
