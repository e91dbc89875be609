//! Command implementations behind the `patlearn` binary.
//!
//! Each function validates its inputs before writing anything, so a failed
//! command leaves no partial outputs behind except where noted.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::{evaluate, format_table, ErrorNorm, EvalReport};
use crate::forward::SimulationOptions;
use crate::geometry::Scenario;
use crate::image::Image;
use crate::io::dataset::{self, Dataset, DatasetManifest, Split};
use crate::io::pgm::{self, Normalization};
use crate::io::{config, patb};
use crate::phantom::{generate_phantom, PhantomParams};
use crate::recon::{reconstruct, BackprojectOptions, WeightTensor};
use crate::train::{sgd_train, EpochRecord, TrainConfig, TrainObserver, TrainState};

pub const RUN_LOG: &str = "run.log";
pub const FINAL_WEIGHTS: &str = "weights.patb";

pub fn checkpoint_name(epoch: usize) -> String {
    format!("weights_epoch{epoch:04}.patb")
}

/// `<out>.patb` and `<out>.pgm`, replacing either extension if present.
pub fn image_outputs(out: &Path) -> (PathBuf, PathBuf) {
    let base = match out.extension().and_then(|e| e.to_str()) {
        Some("patb" | "pgm") => out.with_extension(""),
        _ => out.to_path_buf(),
    };
    let with = |ext: &str| {
        let mut s = base.clone().into_os_string();
        s.push(".");
        s.push(ext);
        PathBuf::from(s)
    };
    (with("patb"), with("pgm"))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

fn write_image_pair(out: &Path, img: &Image) -> Result<(PathBuf, PathBuf)> {
    let (patb_path, pgm_path) = image_outputs(out);
    ensure_parent(&patb_path)?;
    patb::write_image(&patb_path, img)?;
    pgm::write(&pgm_path, img.values())?;
    Ok((patb_path, pgm_path))
}

fn check_scenario(expected: Option<&Path>, dataset: &Dataset) -> Result<()> {
    if let Some(path) = expected {
        let s = config::read_scenario(path)?;
        if &s != dataset.scenario() {
            return Err(Error::Config(format!(
                "{} does not match the scenario of dataset {}",
                path.display(),
                dataset.dir().display()
            )));
        }
    }
    Ok(())
}

/// Writes `count` simulated samples (phantom seeds `seed..seed + count`).
pub fn cmd_gen_data(
    scenario_cfg: &Path,
    out_dir: &Path,
    count: usize,
    seed: u64,
    split: Split,
    opts: &SimulationOptions,
) -> Result<DatasetManifest> {
    let scenario = config::read_scenario(scenario_cfg)?;
    dataset::generate(out_dir, &scenario, count, seed, split, opts)
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub train_dir: PathBuf,
    pub heldout_dir: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub config: TrainConfig,
    pub out_dir: PathBuf,
    /// Contributions are cached in memory below this size.
    pub memory_budget_bytes: usize,
    /// Print one progress line per epoch to stderr.
    pub progress: bool,
}

struct RunWriter {
    out_dir: PathBuf,
    log: fs::File,
    log_path: PathBuf,
    checkpoint_every: usize,
    epochs: usize,
    progress: bool,
}

impl RunWriter {
    fn checkpoint(&self, epoch: usize, weights: &WeightTensor) -> Result<()> {
        patb::write_weights(&self.out_dir.join(checkpoint_name(epoch)), weights)
    }
}

/// One run-log line: `epoch, train_loss, heldout_loss, lr, wall_seconds`.
pub fn log_line(r: &EpochRecord) -> String {
    format!(
        "{}, {:e}, {:e}, {:e}, {:.3}",
        r.epoch,
        r.train_loss,
        r.heldout_loss.unwrap_or(f64::NAN),
        r.learning_rate,
        r.wall_seconds
    )
}

impl TrainObserver for RunWriter {
    fn on_start(&mut self, weights: &WeightTensor, learning_rate: f64) -> Result<()> {
        if self.progress {
            eprintln!("learning rate {learning_rate:e}");
        }
        self.checkpoint(0, weights)
    }

    fn on_epoch(&mut self, record: &EpochRecord, weights: &WeightTensor) -> Result<()> {
        let line = log_line(record);
        writeln!(self.log, "{line}")
            .and_then(|_| self.log.flush())
            .map_err(|e| Error::io(&self.log_path, e))?;
        if self.progress {
            eprintln!("{line}");
        }
        if record.epoch.is_multiple_of(self.checkpoint_every) || record.epoch == self.epochs {
            self.checkpoint(record.epoch, weights)?;
        }
        Ok(())
    }
}

/// Trains weights on `train_dir`, writing checkpoints (epoch 0 always),
/// the final weights and an append-only run log to `out_dir`.
pub fn cmd_train(args: &TrainArgs) -> Result<TrainState> {
    let train = Dataset::open(&args.train_dir)?;
    check_scenario(args.scenario.as_deref(), &train)?;
    let heldout = args.heldout_dir.as_deref().map(Dataset::open).transpose()?;
    if let Some(h) = &heldout {
        if h.scenario() != train.scenario() {
            return Err(Error::Config(format!(
                "held-out set {} uses a different scenario than {}",
                h.dir().display(),
                train.dir().display()
            )));
        }
    }
    if train.is_empty() {
        return Err(Error::Data(format!("training set {} is empty", train.dir().display())));
    }

    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let log_path = args.out_dir.join(RUN_LOG);
    let log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let mut writer = RunWriter {
        out_dir: args.out_dir.clone(),
        log,
        log_path,
        checkpoint_every: args.config.checkpoint_every.max(1),
        epochs: args.config.epochs,
        progress: args.progress,
    };

    let budget = args.memory_budget_bytes;
    let train_pairs = train.pairs(budget)?;
    let held_budget = budget.saturating_sub(train.contrib_bytes());
    let state = match &heldout {
        Some(h) => sgd_train(&train_pairs, &h.pairs(held_budget)?, &args.config, &mut writer)?,
        None => sgd_train(&train_pairs, &Vec::new(), &args.config, &mut writer)?,
    };
    patb::write_weights(&args.out_dir.join(FINAL_WEIGHTS), &state.weights)?;
    Ok(state)
}

fn load_weights(path: Option<&Path>, scenario: &Scenario) -> Result<WeightTensor> {
    match path {
        Some(p) => patb::read_weights(p, &scenario.grid, scenario.detectors.len(), true),
        None => Ok(WeightTensor::ones(scenario.grid, scenario.detectors.len())),
    }
}

/// Reconstructs `data` with `weights` (all ones when `None`) and writes
/// `<out>.patb`, `<out>.pgm` and the PGM normalization sidecar.
pub fn cmd_reconstruct(
    data_path: &Path,
    weights: Option<&Path>,
    scenario_cfg: &Path,
    out: &Path,
) -> Result<Image> {
    let scenario = config::read_scenario(scenario_cfg)?;
    let data = patb::read_sensor_data(data_path, scenario.time, scenario.detectors.clone())?;
    let w = load_weights(weights, &scenario)?;
    let opts = BackprojectOptions {
        sound_speed: scenario.sound_speed,
        ..Default::default()
    };
    let img = reconstruct(&w, &data, &scenario.grid, &opts)?;
    write_image_pair(out, &img)?;
    Ok(img)
}

/// Evaluates a test set and writes the CSV to `out_csv` and the text table
/// next to it with extension `txt`.
pub fn cmd_evaluate(
    test_dir: &Path,
    weights: Option<&Path>,
    scenario_cfg: Option<&Path>,
    out_csv: &Path,
    norm: ErrorNorm,
) -> Result<EvalReport> {
    let test = Dataset::open(test_dir)?;
    check_scenario(scenario_cfg, &test)?;
    let w = weights.map(|p| load_weights(Some(p), test.scenario())).transpose()?;
    let report = evaluate(w.as_ref(), &test, test.scenario().label, norm)?;
    ensure_parent(out_csv)?;
    crate::io::write_atomic(out_csv, report.to_csv().as_bytes())?;
    crate::io::write_atomic(
        &out_csv.with_extension("txt"),
        format_table(std::slice::from_ref(&report)).as_bytes(),
    )?;
    Ok(report)
}

/// Exports the weight slice of one detector as a PGM image.
pub fn cmd_export_weights(
    weights: &Path,
    detector: usize,
    scenario_cfg: Option<&Path>,
    out_pgm: &Path,
) -> Result<Normalization> {
    let values = patb::read_array3(weights)?;
    let n_s = values.dim().2;
    if let Some(cfg) = scenario_cfg {
        let s = config::read_scenario(cfg)?;
        if s.detectors.len() != n_s {
            return Err(Error::shape(
                format!("weights {}", weights.display()),
                &[values.dim().0, values.dim().1, s.detectors.len()],
                values.shape(),
            ));
        }
    }
    if detector >= n_s {
        return Err(Error::Data(format!(
            "detector index {detector} out of range for {n_s} detectors"
        )));
    }
    let slice = values.index_axis(ndarray::Axis(2), detector).to_owned();
    let (_, pgm_path) = image_outputs(out_pgm);
    ensure_parent(&pgm_path)?;
    pgm::write(&pgm_path, &slice)
}

/// Writes one random phantom on the scenario grid.
pub fn cmd_phantom(scenario_cfg: &Path, seed: u64, out: &Path) -> Result<Image> {
    let scenario = config::read_scenario(scenario_cfg)?;
    let params = PhantomParams::for_grid(seed, scenario.grid.n());
    let img = generate_phantom(&params, scenario.grid)?;
    write_image_pair(out, &img)?;
    Ok(img)
}
