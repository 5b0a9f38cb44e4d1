//! Deterministic test scenes.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::body::{save_lbsm, BodyModel, BodyParams, ToyBody};
use crate::error::{Error, Result};
use crate::fusion::save_mask_png;
use crate::geometry::obj::write_obj;
use crate::geometry::{shapes, Bvh, Camera, TriangleMesh, Vec3};
use crate::peel::render_prior_peel;

pub const SCENES: [&str; 5] = ["sphere", "cube", "nested-spheres", "toy-body", "skirt"];

/// Joint count and vertex budget of the toy body used by the body scenes.
pub const TOY_JOINTS: usize = 10;
pub const TOY_VERTICES: usize = 8000;

/// Radii of the concentric shells in `nested-spheres`; a central ray crosses
/// six surfaces.
pub const NESTED_RADII: [f64; 3] = [1.0, 0.5, 0.25];

#[derive(Debug, Clone)]
pub struct Scene {
    pub name: String,
    /// Ground-truth mesh with vertex colors.
    pub mesh: TriangleMesh,
    /// Body model and parameters for the body scenes.
    pub body: Option<(BodyModel, BodyParams)>,
}

/// Smooth seeded vertex colors.
pub fn colorize(mesh: TriangleMesh, seed: u64) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC010);
    let waves: Vec<(Vec3, f64)> = (0..3)
        .map(|_| {
            let k = Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            (k, rng.gen_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let colors = mesh
        .positions()
        .iter()
        .map(|p| {
            let c = |i: usize| (0.5 + 0.45 * (waves[i].0.dot(p) + waves[i].1).sin()) as f32;
            [c(0), c(1), c(2)]
        })
        .collect();
    mesh.with_colors(colors).expect("colors in range")
}

fn toy_body(seed: u64) -> (ToyBody, BodyParams) {
    let toy = crate::body::generate_toy_body(TOY_JOINTS, TOY_VERTICES, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB0D1);
    let mut params = BodyParams::zeros(&toy.model);
    for b in params.beta.iter_mut().take(3) {
        *b = rng.gen_range(-1.0..1.0);
    }
    for t in params.theta.iter_mut().skip(3) {
        *t = rng.gen_range(-0.12..0.12);
    }
    (toy, params)
}

/// Open cone from the waist to just above the knees of the toy body.
pub fn skirt_mesh() -> TriangleMesh {
    shapes::open_frustum(Vec3::new(0.0, 0.12, 0.0), Vec3::new(0.0, -0.6, 0.0), 0.22, 0.58, 96, 24)
}

pub fn build_scene(name: &str, seed: u64) -> Result<Scene> {
    let (mesh, body) = match name {
        "sphere" => (shapes::icosphere(Vec3::zeros(), 1.0, 4), None),
        "cube" => (shapes::cube(Vec3::zeros(), 1.0), None),
        "nested-spheres" => {
            let shells: Vec<_> = NESTED_RADII
                .iter()
                .map(|&r| shapes::icosphere(Vec3::zeros(), r, 4))
                .collect();
            (TriangleMesh::merge(&shells)?, None)
        }
        "toy-body" | "skirt" => {
            let (toy, params) = toy_body(seed);
            let body = toy.model.evaluate(&params)?;
            let mesh = if name == "skirt" {
                TriangleMesh::merge(&[body, skirt_mesh()])?
            } else {
                body
            };
            (mesh, Some((toy.model, params)))
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown scene {other:?}; valid scenes: {}",
                SCENES.join(", ")
            )))
        }
    };
    Ok(Scene {
        name: name.to_string(),
        mesh: colorize(mesh, seed),
        body,
    })
}

/// Layer-1 support of `mesh` seen from `camera`.
pub fn foreground_mask(mesh: &TriangleMesh, camera: &Camera) -> Result<crate::map::Mask> {
    let bvh = Bvh::build(mesh)?;
    Ok(render_prior_peel(mesh, &bvh, camera, 1)?.support(0))
}

/// Writes `mesh.obj` and `foreground.png`, plus `model.lbsm` and
/// `params.json` for body scenes.
pub fn write_scene(scene: &Scene, dir: &Path, camera: &Camera) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_obj(&scene.mesh, &dir.join("mesh.obj"))?;
    save_mask_png(&foreground_mask(&scene.mesh, camera)?, &dir.join("foreground.png"))?;
    if let Some((model, params)) = &scene.body {
        save_lbsm(model, &dir.join("model.lbsm"))?;
        let p = dir.join("params.json");
        std::fs::write(&p, serde_json::to_string_pretty(params)? + "\n").map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}
