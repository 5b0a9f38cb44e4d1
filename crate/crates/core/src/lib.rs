//! Multi-layer depth peel maps of triangle meshes, linear-blend-skinned body
//! priors, peel-map fusion, training losses, surface metrics and point-cloud
//! post-processing.

pub mod body;
pub mod cli;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod losses;
pub mod map;
pub mod metrics;
pub mod peel;
pub mod pointcloud;
pub mod spatial;
pub mod synth;

pub use error::{Error, Result};
pub use peel::MAX_LAYERS;
