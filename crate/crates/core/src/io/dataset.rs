//! Paired phantom/data directories.
//!
//! ```text
//! <dir>/scenario.cfg
//! <dir>/manifest.txt
//! <dir>/phantom_00000.patb   source, (n, n)
//! <dir>/data_00000.patb      sensor data, (n_t, n_s)
//! ...
//! ```
//!
//! The manifest is a `key = value` file with `split`, `count`, `scenario`,
//! `seed` and a space-separated, strictly increasing list of `stems`.

use std::borrow::Cow;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{config, patb, read_text, write_atomic};
use crate::error::{Error, Result};
use crate::forward::{simulate, SensorData, SimulationOptions};
use crate::geometry::Scenario;
use crate::image::Image;
use crate::phantom::{generate_phantom, PhantomParams};
use crate::recon::BackprojectOptions;
use crate::train::{PairSource, TrainingPair};

pub const MANIFEST: &str = "manifest.txt";
pub const SCENARIO: &str = "scenario.cfg";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("split must be 'train' or 'test', got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub split: Split,
    /// Scenario file, relative to the dataset directory.
    pub scenario: PathBuf,
    /// Phantom seed of the first sample; sample `i` uses `seed + i`.
    pub seed: u64,
    pub stems: Vec<String>,
}

pub fn stem(index: usize) -> String {
    format!("{index:05}")
}

pub fn phantom_file(stem: &str) -> String {
    format!("phantom_{stem}.patb")
}

pub fn data_file(stem: &str) -> String {
    format!("data_{stem}.patb")
}

impl DatasetManifest {
    pub fn count(&self) -> usize {
        self.stems.len()
    }

    pub fn to_text(&self) -> String {
        format!(
            "split = {}\ncount = {}\nscenario = {}\nseed = {}\nstems = {}\n",
            self.split,
            self.count(),
            self.scenario.display(),
            self.seed,
            self.stems.join(" ")
        )
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut kv = config::parse(text, path)?;
        let bad = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        let mut take = |key: &str| kv.remove(key).ok_or_else(|| bad(format!("missing key '{key}'")));
        let split = take("split")?.parse()?;
        let count: usize = take("count")?
            .parse()
            .map_err(|_| bad("count is not an integer".into()))?;
        let scenario = PathBuf::from(take("scenario")?);
        let seed = take("seed")?
            .parse()
            .map_err(|_| bad("seed is not an integer".into()))?;
        let stems: Vec<String> = take("stems")?.split_whitespace().map(str::to_string).collect();
        if let Some(k) = kv.keys().next() {
            return Err(bad(format!("unknown key '{k}'")));
        }
        if stems.len() != count {
            return Err(bad(format!("count {count} but {} stems listed", stems.len())));
        }
        if stems.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("stems are not strictly increasing".into()));
        }
        Ok(Self {
            split,
            scenario,
            seed,
            stems,
        })
    }
}

/// An opened and validated dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    dir: PathBuf,
    manifest: DatasetManifest,
    scenario: Scenario,
}

fn sample_stem<'a>(name: &'a str, prefix: &str) -> Option<&'a str> {
    name.strip_prefix(prefix)?.strip_suffix(".patb")
}

fn list_samples(dir: &Path, prefix: &str) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(s) = entry.file_name().to_str().and_then(|n| sample_stem(n, prefix)) {
            out.push(s.to_string());
        }
    }
    out.sort();
    Ok(out)
}

impl Dataset {
    /// Reads the manifest and checks it against the directory listing.
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST);
        let manifest = DatasetManifest::parse(&read_text(&manifest_path)?, &manifest_path)?;
        let scenario = config::read_scenario(&dir.join(&manifest.scenario))?;
        for prefix in ["phantom_", "data_"] {
            let listed = list_samples(dir, prefix)?;
            if listed != manifest.stems {
                return Err(Error::Data(format!(
                    "{}: manifest lists {} samples but the directory has {} {prefix}*.patb files matching differently",
                    dir.display(),
                    manifest.count(),
                    listed.len()
                )));
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            scenario,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn len(&self) -> usize {
        self.manifest.count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn phantom_path(&self, index: usize) -> PathBuf {
        self.dir.join(phantom_file(&self.manifest.stems[index]))
    }

    pub fn data_path(&self, index: usize) -> PathBuf {
        self.dir.join(data_file(&self.manifest.stems[index]))
    }

    pub fn load_phantom(&self, index: usize) -> Result<Image> {
        patb::read_image(&self.phantom_path(index), self.scenario.grid)
    }

    pub fn load_data(&self, index: usize) -> Result<SensorData> {
        patb::read_sensor_data(
            &self.data_path(index),
            self.scenario.time,
            self.scenario.detectors.clone(),
        )
    }

    pub fn backproject_options(&self) -> BackprojectOptions {
        BackprojectOptions {
            sound_speed: self.scenario.sound_speed,
            ..Default::default()
        }
    }

    pub fn load_pair(&self, index: usize) -> Result<TrainingPair> {
        TrainingPair::new(
            &self.load_data(index)?,
            self.load_phantom(index)?,
            &self.backproject_options(),
        )
    }

    /// Bytes needed to hold every sample's contributions in memory.
    pub fn contrib_bytes(&self) -> usize {
        let n = self.scenario.grid.n();
        8 * n * n * (self.scenario.detectors.len() + 1) * self.len()
    }

    /// Loads all pairs into memory when they fit in `budget_bytes`,
    /// otherwise streams them from disk.
    pub fn pairs(&self, budget_bytes: usize) -> Result<Pairs<'_>> {
        if self.contrib_bytes() <= budget_bytes {
            let mut pairs = Vec::with_capacity(self.len());
            for i in 0..self.len() {
                pairs.push(self.load_pair(i)?);
            }
            Ok(Pairs::Memory {
                dataset: self,
                pairs,
            })
        } else {
            Ok(Pairs::Disk(self))
        }
    }
}

impl PairSource for Dataset {
    fn len(&self) -> usize {
        Dataset::len(self)
    }

    fn get(&self, index: usize) -> Result<Cow<'_, TrainingPair>> {
        self.load_pair(index).map(Cow::Owned)
    }

    fn name(&self, index: usize) -> String {
        self.manifest.stems[index].clone()
    }
}

/// Dataset pairs, cached or streamed.
pub enum Pairs<'a> {
    Memory {
        dataset: &'a Dataset,
        pairs: Vec<TrainingPair>,
    },
    Disk(&'a Dataset),
}

impl PairSource for Pairs<'_> {
    fn len(&self) -> usize {
        match self {
            Pairs::Memory { pairs, .. } => pairs.len(),
            Pairs::Disk(d) => d.len(),
        }
    }

    fn get(&self, index: usize) -> Result<Cow<'_, TrainingPair>> {
        match self {
            Pairs::Memory { pairs, .. } => Ok(Cow::Borrowed(&pairs[index])),
            Pairs::Disk(d) => d.get(index),
        }
    }

    fn name(&self, index: usize) -> String {
        match self {
            Pairs::Memory { dataset, .. } | Pairs::Disk(dataset) => PairSource::name(*dataset, index),
        }
    }
}

/// Generates `count` phantoms with seeds `seed + i`, simulates their data
/// and writes a dataset to `dir`. Sample files left over from an earlier
/// run in the same directory are removed. On failure every file written by
/// this call is removed again.
pub fn generate(
    dir: &Path,
    scenario: &Scenario,
    count: usize,
    seed: u64,
    split: Split,
    opts: &SimulationOptions,
) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = DatasetManifest {
        split,
        scenario: PathBuf::from(SCENARIO),
        seed,
        stems: (0..count).map(stem).collect(),
    };
    for prefix in ["phantom_", "data_"] {
        for old in list_samples(dir, prefix)? {
            if !manifest.stems.contains(&old) {
                let path = dir.join(format!("{prefix}{old}.patb"));
                fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
            }
        }
    }

    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<()> {
        let scenario_path = dir.join(SCENARIO);
        config::write_scenario(&scenario_path, scenario)?;
        written.push(scenario_path);
        for (i, s) in manifest.stems.iter().enumerate() {
            let params = PhantomParams::for_grid(seed.wrapping_add(i as u64), scenario.grid.n());
            let phantom = generate_phantom(&params, scenario.grid)?;
            let data = simulate(&phantom, scenario, opts)?;
            let p = dir.join(phantom_file(s));
            patb::write_image(&p, &phantom)?;
            written.push(p);
            let d = dir.join(data_file(s));
            patb::write_sensor_data(&d, &data)?;
            written.push(d);
        }
        let m = dir.join(MANIFEST);
        write_atomic(&m, manifest.to_text().as_bytes())?;
        written.push(m);
        Ok(())
    })();
    if let Err(e) = result {
        for p in &written {
            let _ = fs::remove_file(p);
        }
        return Err(e);
    }
    Ok(manifest)
}
