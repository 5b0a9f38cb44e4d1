//! Colored point clouds from peel maps: back-projection, density-based
//! outlier removal and oriented normals for external surface reconstruction.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{check_resolution, Error, Result};
use crate::geometry::ply::{color_to_u8, parse_ply};
use crate::geometry::{Aabb, Camera, Vec3};
use crate::map::Mask;
use crate::peel::PeelStack;
use crate::spatial::KdTree;

pub const DEFAULT_KNN: usize = 16;
pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColoredPointCloud {
    pub positions: Vec<Vec3>,
    pub colors: Vec<[f32; 3]>,
    pub normals: Option<Vec<Vec3>>,
    /// 1-based peel layer each point came from.
    pub layers: Vec<u8>,
    /// Length that outlier thresholds are relative to, once fixed.
    pub unit_scale: Option<f64>,
}

impl ColoredPointCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Bounding-box diagonal of the positions (0 when empty).
    pub fn diagonal(&self) -> f64 {
        let mut b = Aabb::empty();
        for p in &self.positions {
            b.grow(*p);
        }
        if b.is_empty() {
            0.0
        } else {
            b.diagonal()
        }
    }

    fn select(&self, keep: &[bool]) -> Self {
        let pick = |i: &usize| keep[*i];
        let idx: Vec<usize> = (0..self.len()).filter(pick).collect();
        Self {
            positions: idx.iter().map(|&i| self.positions[i]).collect(),
            colors: idx.iter().map(|&i| self.colors[i]).collect(),
            normals: self.normals.as_ref().map(|n| idx.iter().map(|&i| n[i]).collect()),
            layers: idx.iter().map(|&i| self.layers[i]).collect(),
            unit_scale: self.unit_scale,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.len();
        if self.colors.len() != n || self.layers.len() != n {
            return Err("attribute arrays differ in length".into());
        }
        if let Some(ns) = &self.normals {
            if ns.len() != n {
                return Err("normal array differs in length".into());
            }
            if let Some(i) = ns.iter().position(|v| (v.norm() - 1.0).abs() > 1e-6) {
                return Err(format!("normal {i} is not unit length"));
            }
        }
        Ok(())
    }

    /// Binary little-endian PLY: float32 positions (and normals), uchar
    /// colors, uchar `layer`; the unit scale goes into a header comment.
    pub fn write_ply_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "ply\nformat binary_little_endian 1.0")?;
        if let Some(s) = self.unit_scale {
            writeln!(w, "comment unit_scale {s:e}")?;
        }
        writeln!(w, "element vertex {}", self.len())?;
        writeln!(w, "property float x\nproperty float y\nproperty float z")?;
        if self.normals.is_some() {
            writeln!(w, "property float nx\nproperty float ny\nproperty float nz")?;
        }
        writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue")?;
        writeln!(w, "property uchar layer\nend_header")?;
        for i in 0..self.len() {
            for c in self.positions[i].iter() {
                w.write_all(&(*c as f32).to_le_bytes())?;
            }
            if let Some(ns) = &self.normals {
                for c in ns[i].iter() {
                    w.write_all(&(*c as f32).to_le_bytes())?;
                }
            }
            w.write_all(&self.colors[i].map(color_to_u8))?;
            w.write_all(&[self.layers[i]])?;
        }
        Ok(())
    }

    pub fn save_ply(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_ply_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Reads any PLY vertex set; missing colors become black, a missing
    /// `layer` property becomes 1.
    pub fn load_ply(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let data = parse_ply(BufReader::new(f), path)?;
        let positions = data.positions()?;
        let n = positions.len();
        let unit_scale = data
            .comments
            .iter()
            .find_map(|c| c.strip_prefix("unit_scale ")?.trim().parse::<f64>().ok());
        Ok(Self {
            colors: data.colors().unwrap_or_else(|| vec![[0.0; 3]; n]),
            normals: data
                .normals()
                .map(|ns| ns.into_iter().map(|v| v.try_normalize(0.0).unwrap_or(v)).collect()),
            layers: data
                .column("layer")
                .map_or_else(|| vec![1; n], |l| l.iter().map(|&x| x as u8).collect()),
            positions,
            unit_scale,
        })
    }
}

/// One point per pixel and layer with `d > 0` (and `F = 1` when a foreground
/// mask is given), at `origin + d · direction` of the pixel's ray. Colors come
/// from `rgb`, else from `depth` itself, else black.
pub fn backproject(depth: &PeelStack, rgb: Option<&PeelStack>, foreground: Option<&Mask>) -> Result<ColoredPointCloud> {
    if let Some(r) = rgb {
        depth.check_aligned(r)?;
    }
    if let Some(f) = foreground {
        check_resolution(depth.dims(), f.dims())?;
    }
    let colors_from = rgb.filter(|r| r.has_rgb()).unwrap_or(depth);
    let (w, h) = depth.dims();
    let cam = depth.camera();
    let mut cloud = ColoredPointCloud::default();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if foreground.is_some_and(|f| !f.is_set(i)) {
                continue;
            }
            let ray = cam.ray(x, y);
            for l in 0..depth.layers() {
                let d = depth.depth(l).data()[i];
                if d <= 0.0 {
                    break;
                }
                cloud.positions.push(ray.at(d as f64));
                cloud.colors.push(colors_from.rgb(l).map_or([0.0; 3], |c| c.data()[i]));
                cloud.layers.push((l + 1) as u8);
            }
        }
    }
    Ok(cloud)
}

/// Distance from every point to its k-th nearest other point.
pub fn kth_neighbor_distances(points: &[Vec3], k: usize) -> Vec<f64> {
    let tree = KdTree::new(points);
    points
        .par_iter()
        .map(|p| tree.knn(p, k + 1).last().map_or(f64::INFINITY, |n| n.1.sqrt()))
        .collect()
}

/// Removes points whose k-th nearest-neighbor distance, divided by the
/// cloud's unit scale, exceeds `threshold`, in a single pass. The unit scale
/// is the bounding-box diagonal unless the cloud already records one; the
/// result records it, so re-filtering uses the same scale.
pub fn filter_outliers(cloud: &ColoredPointCloud, k: usize, threshold: f64) -> Result<ColoredPointCloud> {
    if cloud.len() <= k {
        return Err(Error::TooFewPoints { k, count: cloud.len() });
    }
    let scale = cloud.unit_scale.unwrap_or_else(|| cloud.diagonal());
    let mut out = cloud.clone();
    out.unit_scale = Some(scale);
    if scale <= 0.0 {
        return Ok(out);
    }
    let d = kth_neighbor_distances(&cloud.positions, k);
    let keep: Vec<bool> = d.iter().map(|&d| d / scale <= threshold).collect();
    Ok(out.select(&keep))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Odd layers face the camera, even layers face away.
    LayerParity,
    /// Every normal faces the camera.
    CameraOnly,
}

/// PCA normals from the `k` nearest neighbors (the point included), oriented
/// against the viewing ray of `camera`.
pub fn estimate_normals(
    cloud: &ColoredPointCloud,
    k: usize,
    camera: &Camera,
    orientation: Orientation,
) -> Result<ColoredPointCloud> {
    if k < 3 || cloud.len() <= k {
        return Err(Error::TooFewPoints { k, count: cloud.len() });
    }
    let tree = KdTree::new(&cloud.positions);
    let normals = cloud
        .positions
        .par_iter()
        .zip(&cloud.layers)
        .map(|(p, &layer)| {
            let nbrs = tree.knn(p, k);
            let mean = nbrs.iter().map(|n| cloud.positions[n.0]).sum::<Vec3>() / nbrs.len() as f64;
            let mut cov = Matrix3::zeros();
            for n in &nbrs {
                let d = cloud.positions[n.0] - mean;
                cov += d * d.transpose();
            }
            let eig = SymmetricEigen::new(cov);
            let mut n: Vec3 = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
            n.normalize_mut();
            let toward = match orientation {
                Orientation::CameraOnly => true,
                Orientation::LayerParity => layer % 2 == 1,
            };
            let facing = n.dot(&camera.view_direction(*p)) < 0.0;
            if facing != toward {
                n = -n;
            }
            n
        })
        .collect();
    Ok(ColoredPointCloud {
        normals: Some(normals),
        ..cloud.clone()
    })
}

/// Fibonacci-lattice points on a sphere: near-uniform spacing without
/// randomness.
pub fn fibonacci_sphere(center: Vec3, radius: f64, n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f64;
            center + Vec3::new(r * phi.cos(), y, r * phi.sin()) * radius
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Projection;
    use crate::map::Plane;
    use crate::peel::DepthRange;

    fn cloud(points: Vec<Vec3>) -> ColoredPointCloud {
        let n = points.len();
        ColoredPointCloud {
            positions: points,
            colors: vec![[0.5; 3]; n],
            normals: None,
            layers: vec![1; n],
            unit_scale: None,
        }
    }

    #[test]
    fn single_pixel_orthographic() {
        let cam = Camera::looking_down_z(3, 3, Projection::default_orthographic()).unwrap();
        let mut s = PeelStack::empty(cam, 4, false, DepthRange::around_origin(&cam));
        s.depth_mut(0).set(2, 0, 9.5);
        let c = backproject(&s, None, None).unwrap();
        assert_eq!(c.len(), 1);
        let p = c.positions[0];
        let r = cam.ray(2, 0);
        assert_eq!((p.x, p.y), (r.origin.x, r.origin.y));
        assert!((p.z - 0.5).abs() < 1e-12);
        assert_eq!(c.layers, vec![1]);
        let mut f = Plane::filled(3, 3, 1u8);
        f.set(2, 0, 0);
        assert!(backproject(&s, None, Some(&f)).unwrap().is_empty());
    }

    #[test]
    fn coincident_points_survive() {
        let c = cloud(vec![Vec3::new(1.0, 1.0, 1.0); 17]);
        let f = filter_outliers(&c, 16, 0.01).unwrap();
        assert_eq!(f.len(), 17);
        assert!(matches!(filter_outliers(&cloud(vec![Vec3::zeros(); 16]), 16, 0.01), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn infinite_threshold_is_identity() {
        let mut pts = fibonacci_sphere(Vec3::zeros(), 1.0, 500);
        pts.push(Vec3::new(5.0, 0.0, 0.0));
        let c = cloud(pts);
        let f = filter_outliers(&c, 16, f64::INFINITY).unwrap();
        assert_eq!(f.positions, c.positions);
    }

    #[test]
    fn plane_normals_are_consistent() {
        let pts: Vec<Vec3> = (0..400).map(|i| Vec3::new((i % 20) as f64 * 0.01, (i / 20) as f64 * 0.01, 0.0)).collect();
        let cam = Camera::looking_down_z(8, 8, Projection::default_perspective()).unwrap();
        let c = estimate_normals(&cloud(pts), 8, &cam, Orientation::LayerParity).unwrap();
        for n in c.normals.as_ref().unwrap() {
            assert!((n.z - 1.0).abs() < 1e-9);
        }
        assert!(c.validate().is_ok());
        assert!(estimate_normals(&cloud(vec![Vec3::zeros(); 5]), 8, &cam, Orientation::CameraOnly).is_err());
    }

    #[test]
    fn ply_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ply");
        let mut c = cloud(vec![Vec3::new(0.5, 0.25, -1.0), Vec3::new(1.0, 2.0, 3.0)]);
        c.layers = vec![1, 2];
        c.colors = vec![[0.0, 1.0, 0.2], [1.0, 1.0, 1.0]];
        c.normals = Some(vec![Vec3::z(), -Vec3::x()]);
        c.unit_scale = Some(0.1234567890123);
        c.save_ply(&p).unwrap();
        let back = ColoredPointCloud::load_ply(&p).unwrap();
        assert_eq!(back.positions, c.positions);
        assert_eq!(back.layers, c.layers);
        assert_eq!(back.normals, c.normals);
        assert_eq!(back.unit_scale, c.unit_scale);
        assert!((back.colors[0][2] - 0.2).abs() < 1.0 / 255.0);
    }
}
