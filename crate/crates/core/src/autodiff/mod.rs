//! Minimal reverse-mode differentiation over NCHW tensors: just the
//! operations the translation networks and their losses need.

pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod graph;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, Manifest, ParamEntry};
pub use graph::{Graph, Var};
pub use tensor::{Scalar, Tensor};
