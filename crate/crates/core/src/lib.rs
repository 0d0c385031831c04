//! CSegNet: a self-contained cardiac MR segmentation stack.
//!
//! The crate bundles a small reverse-mode autodiff engine, the layers needed
//! by a U-net whose skip connections pass through dilated pyramid pooling
//! blocks, the generalized Dice loss, evaluation metrics, a volume ingestion
//! and augmentation pipeline, and an Adam trainer with top-k checkpoint
//! ensembling.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;
pub mod volume;

pub use autodiff::{grad_check, BinaryKind, Gradients, Graph, Var};
pub use error::TensorError;
pub use loss::{combined_loss, gdl, ClassWeights};
pub use model::{CSegNet, CSegNetParams, ModelConfig, Variant};
pub use tensor::{Scalar, Tensor};
pub use volume::{Phase, Volume};
