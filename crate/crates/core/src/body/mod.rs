//! Linear-blend-skinned parametric body models.

pub mod lbsm;
mod model;
pub mod toy;

pub use lbsm::{from_smpl_json, load_lbsm, save_lbsm};
pub use model::{
    apply_weak_perspective, rodrigues, wrap_axis_angle, BodyModel, BodyParams, WeakPerspective,
};
pub use toy::{generate_toy_body, generate_toy_model, Capsule, ToyBody};

use std::path::Path;

use crate::error::{Error, Result};

pub fn load_params(path: &Path) -> Result<BodyParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
