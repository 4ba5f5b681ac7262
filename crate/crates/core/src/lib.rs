//! Unsupervised segmentation by unpaired image-to-label translation.
//!
//! Label-domain patches are simulated from a simple object model
//! ([`annot`]), image-domain patches come from a phantom renderer
//! ([`phantom`]) or real data, and a cycle-consistent GAN ([`gan`]) learns to
//! translate images into label maps. [`metrics`] scores the result at pixel
//! and object level, and [`pipeline`] ties the stages together.

pub mod annot;
pub mod autodiff;
pub mod error;
pub mod gan;
pub mod image;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
