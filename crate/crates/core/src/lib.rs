//! Desk-scale adversarial semi-supervised domain adaptation for semantic
//! segmentation: synthetic domain pairs, a small segmentation network with
//! per-head discriminators, the scheme objectives, quadrant mixing, target
//! selection, training and evaluation.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod kernels;
pub mod mixing;
pub mod nets;
pub mod objectives;
pub mod optim;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod scheme;
pub mod selection;
pub mod tensor;
pub mod trainer;

pub use error::{Error, ErrorCategory, Result};
pub use scheme::Scheme;
