//! Conditional variational autoencoder for synthesizing per-cycle battery
//! charging data (voltage, current rate, temperature, charge capacity) for a
//! requested `EOL_ECL` condition.
//!
//! The crate is organised bottom-up:
//!
//! - [`numcore`]: dense matrices, affine stacks with exact reverse-mode
//!   gradients, Adam, and a seedable RNG.
//! - [`dataio`]: CSV ingest, synthetic generator, resampling, scaling,
//!   quasi-video packing and deterministic splits.
//! - [`labels`]: condition vocabulary, embedding table and nearest-label matcher.
//! - [`model`]: encoder/decoder forward and backward passes, generation.
//! - [`trainer`]: loss, early-stopped training loop and checkpoints.
//! - [`hpo`]: Gaussian-process Bayesian optimisation over hyperparameters.
//! - [`evalab`]: metrics, reports and layer/embedding ablations.
//! - [`embedviz`]: t-SNE projection, k-means clustering and cluster annotation
//!   of learned embeddings.

mod binio;
pub mod dataio;
pub mod embedviz;
pub mod error;
pub mod evalab;
pub mod hpo;
pub mod labels;
pub mod model;
pub mod numcore;
pub mod trainer;

pub use dataio::{
    BatteryRecord, CycleSeries, DataType, Layout, QuasiVideoSample, ScalerParams, SplitSpec,
};
pub use error::{Error, Result};
pub use labels::{EmbeddingTable, LabelKey, LabelVocab};
pub use model::{Ablation, LatentStats, LayerSite, RcvaeConfig, RcvaeParams};
pub use numcore::{Activation, AdamConfig, AdamState, AffineLayer, Matrix, Rng};
pub use trainer::{Checkpoint, TrainConfig, TrainState};
