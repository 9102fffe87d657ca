//! Learning with noisy labels via two interconnected EM cycles: a main
//! cycle that separates clean from corrupted labels and an auxiliary cycle
//! that refurbishes corrupted labels.

pub mod aux_em;
pub mod config;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod main_em;
pub mod metrics;
pub mod model;
pub mod nonparam;
pub mod plot;
pub mod prob;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use model::{Architecture, Classifier, OptimizerConfig};
pub use prob::{ClassDistribution, CorruptionMatrix, MixtureState, NoisyDataset, TrainingView};
