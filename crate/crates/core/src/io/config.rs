//! Plain-text `key = value` configuration files.
//!
//! One entry per line, `#` starts a comment, blank lines are ignored and
//! keys may not repeat.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{read_text, write_atomic};
use crate::error::{Error, Result};
use crate::geometry::{Arc, DetectorArray, ImageGrid, Scenario, ScenarioLabel, TimeGrid};
use crate::train::{Init, LearningRate, LossKind, TrainConfig};

pub fn parse(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            reason: format!("line {}: expected key=value", lineno + 1),
        })?;
        let key = key.trim().to_string();
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("line {}: duplicate key '{key}'", lineno + 1),
            });
        }
    }
    Ok(out)
}

struct Entries<'a> {
    map: BTreeMap<String, String>,
    path: &'a Path,
}

impl Entries<'_> {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| Error::Format {
                path: self.path.to_path_buf(),
                reason: format!("invalid value '{v}' for '{key}'"),
            }),
        }
    }

    fn require<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.take(key)?.ok_or_else(|| Error::Format {
            path: self.path.to_path_buf(),
            reason: format!("missing key '{key}'"),
        })
    }

    fn take_bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.map.remove(key).as_deref() {
            None => Ok(None),
            Some("true" | "on" | "yes" | "1") => Ok(Some(true)),
            Some("false" | "off" | "no" | "0") => Ok(Some(false)),
            Some(v) => Err(Error::Format {
                path: self.path.to_path_buf(),
                reason: format!("invalid boolean '{v}' for '{key}'"),
            }),
        }
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            None => Ok(()),
            Some(k) => Err(Error::Format {
                path: self.path.to_path_buf(),
                reason: format!("unknown key '{k}'"),
            }),
        }
    }
}

/// Parses a scenario. Required keys: `label`, `n_x`, `n_s`, `n_t`.
/// Defaults: `extent = 1`, `radius = 1`, `t_final = 3`, `directivity = true`,
/// `sound_speed = 1`, `seed = 0`. `custom` scenarios may set `arc_start` and
/// `arc_end` in radians (full circle when absent).
pub fn scenario_from_str(text: &str, path: &Path) -> Result<Scenario> {
    let mut e = Entries {
        map: parse(text, path)?,
        path,
    };
    let label: ScenarioLabel = e
        .map
        .remove("label")
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            reason: "missing key 'label'".into(),
        })?
        .parse()?;
    let n_x: usize = e.require("n_x")?;
    let extent = e.take("extent")?.unwrap_or(1.0);
    let n_s: usize = e.require("n_s")?;
    let radius = e.take("radius")?.unwrap_or(1.0);
    let n_t: usize = e.require("n_t")?;
    let t_final = e.take("t_final")?.unwrap_or(3.0);
    let directivity = e.take_bool("directivity")?.unwrap_or(true);
    let sound_speed = e.take("sound_speed")?.unwrap_or(1.0);
    let seed = e.take("seed")?.unwrap_or(0);
    let arc_start: Option<f64> = e.take("arc_start")?;
    let arc_end: Option<f64> = e.take("arc_end")?;
    e.finish()?;

    let detectors = match (label, arc_start, arc_end) {
        (ScenarioLabel::Custom, Some(start), Some(end)) => {
            DetectorArray::new(Arc::Span { start, end }, n_s, radius)?
        }
        (_, None, None) => DetectorArray::for_label(label, n_s, radius)?,
        _ => {
            return Err(Error::Config(
                "arc_start and arc_end must be given together, and only for custom scenarios"
                    .into(),
            ))
        }
    };
    Scenario::new(
        label,
        ImageGrid::new(n_x, extent)?,
        detectors,
        TimeGrid::new(n_t, t_final)?,
        directivity,
        sound_speed,
        seed,
    )
}

pub fn scenario_to_string(s: &Scenario) -> String {
    let mut out = format!(
        "label = {}\nn_x = {}\nextent = {:e}\nn_s = {}\nradius = {:e}\nn_t = {}\nt_final = {:e}\ndirectivity = {}\nsound_speed = {:e}\nseed = {}\n",
        s.label,
        s.grid.n(),
        s.grid.extent(),
        s.detectors.len(),
        s.detectors.radius(),
        s.time.n_t(),
        s.time.t_final(),
        s.directivity_enabled,
        s.sound_speed,
        s.seed,
    );
    if s.label == ScenarioLabel::Custom {
        if let Arc::Span { start, end } = s.detectors.arc() {
            out.push_str(&format!("arc_start = {start:e}\narc_end = {end:e}\n"));
        }
    }
    out
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    scenario_from_str(&read_text(path)?, path)
}

pub fn write_scenario(path: &Path, scenario: &Scenario) -> Result<()> {
    write_atomic(path, scenario_to_string(scenario).as_bytes())
}

impl FromStr for Init {
    type Err = Error;

    /// `ones`, `const:<value>` or `resume:<path>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "ones" {
            return Ok(Init::Ones);
        }
        if let Some(v) = s.strip_prefix("const:") {
            return v
                .parse()
                .map(Init::Constant)
                .map_err(|_| Error::Config(format!("bad constant in init '{s}'")));
        }
        if let Some(p) = s.strip_prefix("resume:") {
            return Ok(Init::Resume(PathBuf::from(p)));
        }
        Err(Error::Config(format!(
            "init must be 'ones', 'const:<value>' or 'resume:<path>', got '{s}'"
        )))
    }
}

impl FromStr for LearningRate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(LearningRate::Auto),
            v => v
                .parse()
                .map(LearningRate::Fixed)
                .map_err(|_| Error::Config(format!("learning rate must be a number or 'auto', got '{v}'"))),
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "squared" => Ok(LossKind::Squared),
            "unsquared" => Ok(LossKind::Unsquared),
            v => Err(Error::Config(format!("loss must be 'squared' or 'unsquared', got '{v}'"))),
        }
    }
}

/// Parses a training configuration; absent keys keep their defaults.
/// Keys: `epochs`, `batch_size`, `lr`, `init`, `shuffle_seed`,
/// `checkpoint_every`, `loss`, `weight_grid`.
pub fn train_config_from_str(text: &str, path: &Path) -> Result<TrainConfig> {
    let mut e = Entries {
        map: parse(text, path)?,
        path,
    };
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        epochs: e.take("epochs")?.unwrap_or(d.epochs),
        batch_size: e.take("batch_size")?.unwrap_or(d.batch_size),
        learning_rate: e.take("lr")?.unwrap_or(d.learning_rate),
        init: e.take("init")?.unwrap_or(d.init),
        shuffle_seed: e.take("shuffle_seed")?.unwrap_or(d.shuffle_seed),
        checkpoint_every: e.take("checkpoint_every")?.unwrap_or(d.checkpoint_every),
        loss: e.take("loss")?.unwrap_or(d.loss),
        weight_grid: e.take("weight_grid")?,
    };
    e.finish()?;
    Ok(cfg)
}

pub fn read_train_config(path: &Path) -> Result<TrainConfig> {
    train_config_from_str(&read_text(path)?, path)
}
