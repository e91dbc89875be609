//! Fitting backprojection weights by stochastic gradient descent.
//!
//! For one pair `(G, F)` with contributions `b = b(G)` the squared loss is
//! `‖F − P(W, G)‖²` with `P(W, G)(x) = Σ_j W(x, s_j)² b(x, s_j)`, so
//!
//! ```text
//! ∂/∂W(x, s_j) = 2 (P(x) − F(x)) · 2 W(x, s_j) b(x, s_j).
//! ```
//!
//! The contributions do not depend on `W`; they are computed once per
//! sample and reused for every epoch when they fit in memory.

use std::borrow::Cow;
use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::SensorData;
use crate::geometry::ImageGrid;
use crate::image::Image;
use crate::recon::{backproject_contrib, weighted_sum, BackprojectOptions, ContribTensor, WeightTensor};

/// Distance between reconstruction and ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    /// `‖F − P‖₂²`
    #[default]
    Squared,
    /// `‖F − P‖₂`
    Unsquared,
}

/// Precomputed contributions together with the ground truth source.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub contrib: ContribTensor,
    pub target: Image,
}

impl TrainingPair {
    pub fn new(data: &SensorData, target: Image, opts: &BackprojectOptions) -> Result<Self> {
        let contrib = backproject_contrib(data, target.grid(), opts)?;
        Self::from_contrib(contrib, target)
    }

    pub fn from_contrib(contrib: ContribTensor, target: Image) -> Result<Self> {
        if contrib.grid() != target.grid() {
            let (a, b) = (contrib.grid().n(), target.grid().n());
            return Err(Error::shape("training pair", &[a, a], &[b, b]));
        }
        Ok(Self { contrib, target })
    }
}

/// Indexed access to training pairs, either held in memory or rebuilt from
/// disk on demand.
pub trait PairSource: Sync {
    fn len(&self) -> usize;

    fn get(&self, index: usize) -> Result<Cow<'_, TrainingPair>>;

    /// Identifier used in reports.
    fn name(&self, index: usize) -> String {
        format!("{index:05}")
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PairSource for [TrainingPair] {
    fn len(&self) -> usize {
        <[TrainingPair]>::len(self)
    }

    fn get(&self, index: usize) -> Result<Cow<'_, TrainingPair>> {
        Ok(Cow::Borrowed(&self[index]))
    }
}

impl PairSource for Vec<TrainingPair> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn get(&self, index: usize) -> Result<Cow<'_, TrainingPair>> {
        Ok(Cow::Borrowed(&self[index]))
    }
}

fn check_pair(weights: &WeightTensor, pair: &TrainingPair) -> Result<()> {
    let n = pair.contrib.grid().n();
    if weights.n_s() != pair.contrib.n_s() || weights.grid().n() > n || weights.grid().n() < 2 {
        return Err(Error::shape(
            "weights vs training pair",
            &[n, n, pair.contrib.n_s()],
            weights.values().shape(),
        ));
    }
    Ok(())
}

fn distance(residual_sq: f64, kind: LossKind) -> f64 {
    match kind {
        LossKind::Squared => residual_sq,
        LossKind::Unsquared => residual_sq.sqrt(),
    }
}

/// Loss of one pair; `weights` must already live on the pair's grid.
fn pair_loss(full: &WeightTensor, pair: &TrainingPair, kind: LossKind) -> Result<f64> {
    let rec = weighted_sum(full, &pair.contrib)?;
    let sq: f64 = rec
        .iter()
        .zip(pair.target.values())
        .map(|(p, f)| (p - f) * (p - f))
        .sum();
    Ok(distance(sq, kind))
}

/// Mean distance `(1/M) Σ_i D(F_i, P(W, G_i))` over all pairs.
pub fn loss(weights: &WeightTensor, pairs: &dyn PairSource, kind: LossKind) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Data("loss needs at least one pair".into()));
    }
    let mut total = 0.0;
    for i in 0..pairs.len() {
        let pair = pairs.get(i)?;
        check_pair(weights, &pair)?;
        let full = weights.upsample(pair.contrib.grid());
        total += pair_loss(&full, &pair, kind)?;
    }
    Ok(total / pairs.len() as f64)
}

/// Loss and exact gradient with respect to `weights` for one pair.
pub fn loss_and_grad(
    weights: &WeightTensor,
    pair: &TrainingPair,
    kind: LossKind,
) -> Result<(f64, Array3<f64>)> {
    check_pair(weights, pair)?;
    let grid = *pair.contrib.grid();
    let full = weights.upsample(&grid);
    let n = grid.n();
    let n_s = pair.contrib.n_s();
    let rec = weighted_sum(&full, &pair.contrib)?;
    let residual: Vec<f64> = rec
        .iter()
        .zip(pair.target.values())
        .map(|(p, f)| p - f)
        .collect();
    let sq: f64 = residual.iter().map(|r| r * r).sum();
    let value = distance(sq, kind);
    let outer = match kind {
        LossKind::Squared => 2.0,
        LossKind::Unsquared if sq > 0.0 => 1.0 / sq.sqrt(),
        LossKind::Unsquared => 0.0,
    };

    let w = full.values().as_slice().expect("contiguous weights");
    let b = pair.contrib.values().as_slice().expect("contiguous contributions");
    let mut g = vec![0.0; n * n * n_s];
    g.par_chunks_mut(n_s).enumerate().for_each(|(p, gp)| {
        let factor = outer * residual[p] * 2.0;
        let range = p * n_s..(p + 1) * n_s;
        for ((gv, wv), bv) in gp.iter_mut().zip(&w[range.clone()]).zip(&b[range]) {
            *gv = factor * wv * bv;
        }
    });
    let g = Array3::from_shape_vec((n, n, n_s), g).unwrap();
    Ok((value, weights.upsample_adjoint(&g)))
}

/// Exact gradient of the single-pair loss.
pub fn grad(weights: &WeightTensor, pair: &TrainingPair, kind: LossKind) -> Result<Array3<f64>> {
    Ok(loss_and_grad(weights, pair, kind)?.1)
}

/// Applied to the probed rate: the probe finds the edge of stability, and
/// SGD at that edge keeps oscillating instead of settling.
pub const AUTO_LR_FACTOR: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Ones,
    Constant(f64),
    Resume(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate {
    Fixed(f64),
    /// [`AUTO_LR_FACTOR`] times the largest power of ten that passes
    /// [`probe_learning_rate`].
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: LearningRate,
    pub init: Init,
    pub shuffle_seed: u64,
    pub checkpoint_every: usize,
    pub loss: LossKind,
    /// Side length of a coarser weight grid, upsampled bilinearly.
    pub weight_grid: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 1,
            learning_rate: LearningRate::Auto,
            init: Init::Ones,
            shuffle_seed: 0,
            checkpoint_every: 10,
            loss: LossKind::Squared,
            weight_grid: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if let LearningRate::Fixed(lr) = self.learning_rate {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(Error::Config(format!("learning rate must be >= 0, got {lr}")));
            }
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint interval must be at least 1".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub heldout_loss: Option<f64>,
    pub learning_rate: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub weights: WeightTensor,
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: Vec<f64>,
    pub heldout_loss: Vec<f64>,
    /// Held-out loss of the initial weights.
    pub initial_heldout_loss: Option<f64>,
}

/// Receives progress during [`sgd_train`].
pub trait TrainObserver {
    fn on_start(&mut self, _weights: &WeightTensor, _learning_rate: f64) -> Result<()> {
        Ok(())
    }

    fn on_epoch(&mut self, _record: &EpochRecord, _weights: &WeightTensor) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct Silent;

impl TrainObserver for Silent {}

fn initial_weights(cfg: &TrainConfig, grid: &ImageGrid, n_s: usize) -> Result<WeightTensor> {
    let param_grid = match cfg.weight_grid {
        Some(m) if m > grid.n() => {
            return Err(Error::Config(format!(
                "weight grid {m} is finer than the image grid {}",
                grid.n()
            )))
        }
        Some(m) => ImageGrid::new(m, grid.extent())?,
        None => *grid,
    };
    let w = match &cfg.init {
        Init::Ones => WeightTensor::ones(param_grid, n_s),
        Init::Constant(k) => WeightTensor::constant(param_grid, n_s, *k),
        Init::Resume(path) => {
            let values = crate::io::patb::read_array3(path)?;
            let m = values.dim().0;
            WeightTensor::from_values(ImageGrid::new(m, grid.extent())?, values)?
        }
    };
    if w.n_s() != n_s || w.grid().n() > grid.n() {
        return Err(Error::shape(
            "initial weights",
            &[param_grid.n(), param_grid.n(), n_s],
            w.values().shape(),
        ));
    }
    Ok(w)
}

fn sgd_step(
    weights: &mut WeightTensor,
    source: &dyn PairSource,
    batch: &[usize],
    lr: f64,
    kind: LossKind,
) -> Result<f64> {
    let mut total_loss = 0.0;
    let mut acc: Option<Array3<f64>> = None;
    for &i in batch {
        let pair = source.get(i)?;
        let (l, g) = loss_and_grad(weights, &pair, kind)?;
        total_loss += l;
        acc = Some(match acc {
            None => g,
            Some(a) => a + g,
        });
    }
    if let Some(g) = acc {
        let scale = lr / batch.len() as f64;
        weights.values_mut().zip_mut_with(&g, |w, gv| *w -= scale * gv);
    }
    Ok(total_loss)
}

fn heldout(weights: &WeightTensor, source: &dyn PairSource, kind: LossKind) -> Result<Option<f64>> {
    if source.is_empty() {
        Ok(None)
    } else {
        loss(weights, source, kind).map(Some)
    }
}

/// Probes powers of ten from `1e3` down to `1e-12` and keeps the largest
/// one for which five steps on (at most) five samples keep the loss on
/// those samples finite and strictly decreasing.
pub fn probe_learning_rate(
    init: &WeightTensor,
    source: &dyn PairSource,
    kind: LossKind,
) -> Result<f64> {
    if source.is_empty() {
        return Err(Error::Data("learning-rate probe needs at least one sample".into()));
    }
    let probe: Vec<TrainingPair> = (0..source.len().min(5))
        .map(|i| source.get(i).map(Cow::into_owned))
        .collect::<Result<_>>()?;
    let l0 = loss(init, &probe, kind)?;
    if l0 == 0.0 {
        return Ok(1.0);
    }
    'candidates: for exp in (-12..=3).rev() {
        let lr = 10f64.powi(exp);
        let mut w = init.clone();
        let mut prev = l0;
        for step in 0..5 {
            sgd_step(&mut w, &probe, &[step % probe.len()], lr, kind)?;
            let l = loss(&w, &probe, kind)?;
            if !l.is_finite() || l >= prev {
                continue 'candidates;
            }
            prev = l;
        }
        return Ok(lr);
    }
    Err(Error::Config(
        "no learning rate in [1e-12, 1e3] decreases the loss; set one explicitly".into(),
    ))
}

fn epoch_order(n: usize, shuffle_seed: u64, epoch: usize) -> Vec<usize> {
    let seed = shuffle_seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Plain SGD over `train`, evaluating `held_out` after each epoch.
pub fn sgd_train(
    train: &dyn PairSource,
    held_out: &dyn PairSource,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainState> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let first = train.get(0)?;
    let grid = *first.contrib.grid();
    let n_s = first.contrib.n_s();
    drop(first);

    let mut weights = initial_weights(cfg, &grid, n_s)?;
    let lr = match cfg.learning_rate {
        LearningRate::Fixed(lr) => lr,
        LearningRate::Auto => AUTO_LR_FACTOR * probe_learning_rate(&weights, train, cfg.loss)?,
    };
    let initial_heldout_loss = heldout(&weights, held_out, cfg.loss)?;
    observer.on_start(&weights, lr)?;

    let mut state = TrainState {
        weights: weights.clone(),
        epoch: 0,
        learning_rate: lr,
        train_loss: Vec::with_capacity(cfg.epochs),
        heldout_loss: Vec::with_capacity(cfg.epochs),
        initial_heldout_loss,
    };
    let started = Instant::now();
    for epoch in 1..=cfg.epochs {
        let order = epoch_order(train.len(), cfg.shuffle_seed, epoch);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            total += sgd_step(&mut weights, train, batch, lr, cfg.loss)?;
        }
        let train_loss = total / train.len() as f64;
        if !train_loss.is_finite() || weights.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                epoch,
                loss: train_loss,
                lr,
            });
        }
        let held = heldout(&weights, held_out, cfg.loss)?;
        if let Some(h) = held {
            if !h.is_finite() {
                return Err(Error::Divergence { epoch, loss: h, lr });
            }
            state.heldout_loss.push(h);
        }
        state.train_loss.push(train_loss);
        state.epoch = epoch;
        let record = EpochRecord {
            epoch,
            train_loss,
            heldout_loss: held,
            learning_rate: lr,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        observer.on_epoch(&record, &weights)?;
    }
    state.weights = weights;
    Ok(state)
}
