//! Weakly-supervised pedestrian attribute recognition and localization.
//!
//! A small convolutional trunk feeds three branches; each branch ends in a
//! flexible spatial pyramid pooling (FSPP) layer whose bins act as local
//! detectors of mid-level features. Attribute scores are regressed from the
//! concatenated bin maxima, and attributes are later localized by fusing the
//! detector activation maps, weighted by how strongly each bin correlates
//! with the attribute over the training set.

pub mod config;
pub mod error;
pub mod gradcheck;
pub mod image;
mod linalg;
pub mod localization;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Result, WpalError};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
