//! Photoacoustic tomography with learned backprojection weights.
//!
//! The crate simulates two-dimensional photoacoustic measurements with
//! directional detectors, reconstructs sources with a weighted universal
//! backprojection, and fits the per-pixel, per-detector weights by
//! stochastic gradient descent on phantom/data pairs.
//!
//! The pipeline, bottom up:
//!
//! - [`geometry`]: image grid, detector arcs, time samples, directivity.
//! - [`phantom`]: randomized Shepp-Logan style sources.
//! - [`forward`]: the forward operator from source to sensor data.
//! - [`recon`]: time filtering, the singular time integral and the
//!   weighted backprojection.
//! - [`train`]: loss, exact gradient and SGD over a dataset.
//! - [`eval`]: relative error reports.
//! - [`io`] and [`cli`]: file formats, datasets and command entry points.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod cli;
pub mod error;
pub mod eval;
pub mod forward;
pub mod geometry;
pub mod image;
pub mod io;
pub mod phantom;
pub mod recon;
pub mod train;

pub use error::{Error, Result};
pub use forward::{simulate, SensorData, SimulationOptions};
pub use geometry::{DetectorArray, ImageGrid, Scenario, ScenarioLabel, TimeGrid};
pub use image::Image;
pub use phantom::{generate_phantom, PhantomParams};
pub use recon::{
    backproject_contrib, weighted_ubp, BackprojectOptions, ContribTensor, WeightTensor,
};
