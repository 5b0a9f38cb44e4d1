//! Surface reconstruction metrics: Chamfer distance, point-to-surface
//! distance and normal re-projection error.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_resolution, Error, Result};
use crate::geometry::{Bvh, TriangleMesh, Vec3};
use crate::losses::pairwise_sum;
use crate::map::Plane;
use crate::spatial::KdTree;

fn nn_squared(from: &[Vec3], to: &KdTree) -> Vec<f64> {
    from.par_iter().map(|p| to.nearest(p).map_or(f64::INFINITY, |n| n.1)).collect()
}

fn check_sets(a: &[Vec3], b: &[Vec3]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(())
}

/// Both directed sums of squared nearest-neighbor distances.
fn directed(a: &[Vec3], b: &[Vec3]) -> (Vec<f64>, Vec<f64>) {
    let (ta, tb) = (KdTree::new(a), KdTree::new(b));
    (nn_squared(a, &tb), nn_squared(b, &ta))
}

/// `Σ_{x∈A} min_y ‖x−y‖² + Σ_{y∈B} min_x ‖x−y‖²`.
pub fn chamfer_sum(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    check_sets(a, b)?;
    let (ab, ba) = directed(a, b);
    Ok(pairwise_sum(&ab) + pairwise_sum(&ba))
}

/// Per-point variant: mean squared distance in each direction, summed.
pub fn chamfer_mean(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    check_sets(a, b)?;
    let (ab, ba) = directed(a, b);
    Ok(pairwise_sum(&ab) / ab.len() as f64 + pairwise_sum(&ba) / ba.len() as f64)
}

/// Exact distance from each point to the nearest triangle of `mesh`.
pub fn surface_distances(points: &[Vec3], mesh: &TriangleMesh, bvh: &Bvh) -> Vec<f64> {
    points.par_iter().map(|p| bvh.closest_point(mesh, p).0.sqrt()).collect()
}

/// Mean point-to-surface distance.
pub fn p2s(points: &[Vec3], mesh: &TriangleMesh, bvh: &Bvh) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let d = surface_distances(points, mesh, bvh);
    Ok(pairwise_sum(&d) / d.len() as f64)
}

/// Mean `‖pred − gt‖₂` over pixels where either map is non-zero.
pub fn normal_reprojection(pred: &Plane<[f32; 3]>, gt: &Plane<[f32; 3]>) -> Result<f64> {
    check_resolution(pred.dims(), gt.dims())?;
    let terms: Vec<f64> = pred
        .data()
        .iter()
        .zip(gt.data())
        .filter(|(p, g)| **p != [0.0; 3] || **g != [0.0; 3])
        .map(|(p, g)| {
            (0..3)
                .map(|c| (p[c] as f64 - g[c] as f64).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Ok(if terms.is_empty() {
        0.0
    } else {
        pairwise_sum(&terms) / terms.len() as f64
    })
}

/// Metric values plus the conventions used to produce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Squared-distance Chamfer, summed over points (`chamfer_sum`).
    pub chamfer: f64,
    /// Squared-distance Chamfer, averaged per direction (`chamfer_mean`).
    pub chamfer_mean: f64,
    pub p2s: f64,
    pub normal_l2: Option<f64>,
    pub conventions: MetricConventions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConventions {
    pub chamfer_distance: String,
    pub chamfer_reduction: String,
    pub p2s: String,
    pub normal_support: String,
    pub surface_samples: usize,
    pub seed: u64,
}
