//! Diagnosis of hand-drawn spirals as point clouds, with per-segment
//! attributions from perturbation-trained surrogate models.

pub mod classifier;
pub mod clinical;
pub mod error;
pub mod explain;
pub mod fidelity;
pub mod par;
pub mod pointcloud;
pub mod render;
pub mod signal;
pub mod surrogate;
pub mod synth;

pub use error::{Error, Result};
