//! Triangle meshes, rays, cameras and the BVH used by every renderer and
//! surface-distance query.

mod bvh;
mod camera;
mod distance;
mod mesh;
pub mod obj;
pub mod ply;
mod ray;
pub mod shapes;

pub use bvh::{Aabb, Bvh, BvhNode, HIT_MERGE_RELATIVE, MAX_LEAF_TRIANGLES};
pub use camera::{
    Camera, CameraRecord, Projection, DEFAULT_CAMERA_DISTANCE, DEFAULT_FOV_Y_DEG,
    DEFAULT_HALF_HEIGHT,
};
pub use distance::closest_point_on_triangle;
pub use mesh::{TriangleMesh, DEGENERATE_AREA};
pub use ray::{merge_coincident, Hit, Ray, ShearedRay};

use std::path::Path;

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Loads an `.obj` or `.ply` mesh, chosen by file extension.
pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("obj") => obj::read_obj(path),
        Some("ply") => ply::read_ply_mesh(path),
        _ => Err(Error::format(
            "mesh",
            format!("{}: expected a .obj or .ply file", path.display()),
        )),
    }
}
