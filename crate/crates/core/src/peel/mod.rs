//! Multi-layer depth peel maps: every ray–surface crossing per pixel, in
//! order, up to a fixed layer count.

pub mod format;
mod render;
mod stack;

pub use format::{save_depth_preview, sidecar_path, Manifest, PeelFile, Tag};
pub use render::{render_normal_map, render_peel, render_prior_peel, DEFAULT_LAYERS, MAX_LAYERS};
pub use stack::{DepthRange, PeelStack, DEPTH_HALF_RANGE};
