//! Data-parallel training of deep activity-recognition models.
//!
//! Workers train partial models on disjoint shards, the master averages their
//! parameters and broadcasts the result for the next round. The same loop
//! drives greedy denoising-autoencoder pretraining and supervised fine-tuning.

pub mod data;
pub mod engine;
pub mod error;
pub mod eval;
pub mod model_file;
pub mod nn;
pub mod pipeline;
pub mod pretrain;
pub mod rng;
pub mod service;

pub use error::{Error, Result};
pub use nn::{DeepModel, LayerParams, LossKind, Matrix, Parameters, Targets};
