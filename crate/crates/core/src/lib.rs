//! Binary multi-layer perceptrons trained without gradients.
//!
//! Every layer keeps 8-bit hidden weights whose signs are the visible binary
//! weights, plus a fixed random ±1 classifier that turns the layer's
//! activations into a local class score. Training flags patterns that a
//! layer misclassifies (or classifies with too small a margin), picks the
//! easiest perceptron to fix in each group, and nudges its hidden weights
//! with clipped-perceptron steps followed by stochastic reinforcement.
//! The forward pass is pure XNOR + popcount over packed bits.

pub mod bitcore;
pub mod cost;
pub mod data;
pub mod error;
pub mod model;
pub mod persist;
pub mod rng;
pub mod train;

pub use bitcore::{BitMatrix, BitVector, Word};
pub use data::{BinarizedDataset, RawDataset};
pub use error::{Error, Result};
pub use model::{ForwardTrace, Gamma, Hyperparams, LayerState, Network, OpCounts, Robustness};
pub use train::{EpochMetrics, TrainState};
