//! Behavioral-cloning driving stack.
//!
//! The crate is split along the data path:
//!
//! - [`sim`]: a deterministic top-down racing environment with a seven-value
//!   sensor readout and a software rasterizer producing 96×96 observations.
//! - [`dataset`]: action labels, the on-disk sample format and the
//!   preprocessing steps (intro discard, rebalancing, grayscale, augmentation).
//! - [`nn`]: hand-differentiated layers, cross-entropy, Adam and a
//!   finite-difference gradient checker.
//! - [`model`]: the two-branch network that appends the sensor vector to the
//!   flattened convolution features.
//! - [`train`], [`eval`], [`expert`], [`record`]: the training loop, closed-loop
//!   scoring, the scripted demonstrator and episode recording.
//!
//! Data-parallel loops (per-sample gradients, per-episode rollouts,
//! per-sample augmentation) go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise. Both paths
//! produce bit-identical results.

pub mod dataset;
pub mod eval;
pub mod expert;
pub mod model;
pub mod nn;
pub mod par;
pub mod record;
pub mod seed;
pub mod sim;
pub mod train;

pub use dataset::{ActionLabel, Dataset, Sample};
pub use model::{MixedModel, ModelConfig};
pub use sim::{ContinuousAction, InputMode, Observation, SensorVector, SimConfig, SimState, Track};
