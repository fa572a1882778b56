//! Fuzzy rule classification on features learned by stacked sparse
//! denoising autoencoders.
//!
//! The pipeline is: membership-function preprocessing ([`mf`]), greedy
//! layerwise autoencoder pretraining ([`network`]), one of four fine-tuning
//! strategies ([`finetune`]), and an Ishibuchi-style fuzzy rule classifier
//! trained on the last hidden layer ([`frc`]). [`eval`] wraps the pipeline
//! in cross-validation and provides rank-based classifier comparison
//! statistics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod eval;
pub mod finetune;
pub mod frc;
pub mod mf;
pub mod network;
pub mod optim;
pub mod par;
pub mod pipeline;
pub mod seed;
pub mod stats;

pub use dataset::{CsvSchema, Dataset, FoldPlan, LabelColumn};
pub use error::{Error, Result};
pub use frc::{RuleBase, RuleBaseOptions};
pub use mf::{MembershipFunction, PreprocSpec};
pub use network::{AeConfig, Network};
pub use optim::{CmaesConfig, OptimizerConfig};
pub use par::Execution;
