use rayon::prelude::*;

use super::stack::{DepthRange, PeelStack};
use crate::error::{Error, Result};
use crate::geometry::{Bvh, Camera, Hit, TriangleMesh, Vec3};
use crate::map::Plane;

pub const DEFAULT_LAYERS: usize = 4;
/// Largest supported layer count.
pub const MAX_LAYERS: usize = 16;

struct RowOut {
    depth: Vec<f32>,
    rgb: Vec<[f32; 3]>,
    overflow: usize,
}

fn check_layers(layers: usize) -> Result<()> {
    if layers == 0 || layers > MAX_LAYERS {
        return Err(Error::InvalidLayerCount(layers));
    }
    Ok(())
}

fn interpolate_color(mesh: &TriangleMesh, colors: &[[f32; 3]], hit: &Hit) -> [f32; 3] {
    let tri = mesh.triangles()[hit.triangle as usize];
    let mut c = [0.0f64; 3];
    for (k, &v) in tri.iter().enumerate() {
        for ch in 0..3 {
            c[ch] += hit.bary[k] * colors[v as usize][ch] as f64;
        }
    }
    c.map(|x| x.clamp(0.0, 1.0) as f32)
}

fn render_row(
    mesh: &TriangleMesh,
    bvh: &Bvh,
    camera: &Camera,
    layers: usize,
    colors: Option<&[[f32; 3]]>,
    y: usize,
) -> RowOut {
    let w = camera.width();
    let mut out = RowOut {
        depth: vec![0.0; w * layers],
        rgb: if colors.is_some() {
            vec![[0.0; 3]; w * layers]
        } else {
            Vec::new()
        },
        overflow: 0,
    };
    let mut hits = Vec::new();
    for x in 0..w {
        bvh.intersect_all_into(mesh, &camera.ray(x, y), &mut hits);
        let mut filled = 0;
        let mut last = 0.0f32;
        for hit in &hits {
            let t = hit.t as f32;
            // two crossings that collapse to one f32 value would break
            // strict layer monotonicity
            if t <= last {
                continue;
            }
            if filled == layers {
                out.overflow += 1;
                break;
            }
            out.depth[filled * w + x] = t;
            if let Some(colors) = colors {
                out.rgb[filled * w + x] = interpolate_color(mesh, colors, hit);
            }
            last = t;
            filled += 1;
        }
    }
    out
}

fn render(mesh: &TriangleMesh, bvh: &Bvh, camera: &Camera, layers: usize, with_rgb: bool) -> Result<PeelStack> {
    check_layers(layers)?;
    let colors = if with_rgb { mesh.colors() } else { None };
    let (w, h) = (camera.width(), camera.height());
    let rows: Vec<RowOut> = (0..h)
        .into_par_iter()
        .map(|y| render_row(mesh, bvh, camera, layers, colors, y))
        .collect();

    let mut stack = PeelStack::empty(*camera, layers, colors.is_some(), DepthRange::around_origin(camera));
    let mut overflow = 0;
    for (y, row) in rows.iter().enumerate() {
        overflow += row.overflow;
        for l in 0..layers {
            let span = l * w..(l + 1) * w;
            stack.depth_mut(l).data_mut()[y * w..(y + 1) * w].copy_from_slice(&row.depth[span.clone()]);
            if let Some(rgb) = stack.rgb_mut(l) {
                rgb.data_mut()[y * w..(y + 1) * w].copy_from_slice(&row.rgb[span]);
            }
        }
    }
    stack.set_overflow_pixels(overflow);
    Ok(stack)
}

/// Depth and RGB peel maps of `mesh`. RGB is interpolated from vertex colors
/// and omitted when the mesh has none.
pub fn render_peel(mesh: &TriangleMesh, bvh: &Bvh, camera: &Camera, layers: usize) -> Result<PeelStack> {
    render(mesh, bvh, camera, layers, true)
}

/// Depth-only peel maps, as used for body priors.
pub fn render_prior_peel(mesh: &TriangleMesh, bvh: &Bvh, camera: &Camera, layers: usize) -> Result<PeelStack> {
    render(mesh, bvh, camera, layers, false)
}

/// Camera-space unit normals of the first surface hit per pixel, zero on
/// background. Vertex normals come from the mesh or are computed
/// area-weighted.
pub fn render_normal_map(mesh: &TriangleMesh, bvh: &Bvh, camera: &Camera) -> Plane<[f32; 3]> {
    let computed;
    let normals = match mesh.normals() {
        Some(n) => n,
        None => {
            computed = mesh.vertex_normals();
            &computed
        }
    };
    let (w, h) = (camera.width(), camera.height());
    let rows: Vec<Vec<[f32; 3]>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut hits = Vec::new();
            (0..w)
                .map(|x| {
                    bvh.intersect_all_into(mesh, &camera.ray(x, y), &mut hits);
                    let Some(hit) = hits.first() else {
                        return [0.0; 3];
                    };
                    let tri = mesh.triangles()[hit.triangle as usize];
                    let mut n = Vec3::zeros();
                    for k in 0..3 {
                        n += normals[tri[k] as usize] * hit.bary[k];
                    }
                    if n.norm() < 1e-12 {
                        let [a, b, c] = mesh.corners(hit.triangle as usize);
                        n = (b - a).cross(&(c - a));
                    }
                    let n = camera.to_camera_frame(n.normalize());
                    [n.x as f32, n.y as f32, n.z as f32]
                })
                .collect()
        })
        .collect();
    Plane::from_vec(w, h, rows.concat())
}
