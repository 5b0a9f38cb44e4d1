use log::warn;

use super::{Aabb, Vec3};
use crate::error::{Error, Result};

/// Triangles whose area is at or below this value (world units squared) are
/// dropped when a mesh is assembled.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// An indexed triangle mesh with optional per-vertex colors and normals.
///
/// Construct through [`TriangleMesh::new`], which validates indices, color
/// ranges and attribute lengths, and drops degenerate triangles. The struct is
/// immutable afterwards, so it can be shared freely between render threads.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    positions: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    colors: Option<Vec<[f32; 3]>>,
    normals: Option<Vec<Vec3>>,
    dropped_degenerate: usize,
}

impl TriangleMesh {
    pub fn new(
        positions: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
        colors: Option<Vec<[f32; 3]>>,
        normals: Option<Vec<Vec3>>,
    ) -> Result<Self> {
        let n = positions.len();
        for (t, tri) in triangles.iter().enumerate() {
            for &i in tri {
                if i as usize >= n {
                    return Err(Error::IndexOutOfRange {
                        triangle: t,
                        index: i,
                        count: n,
                    });
                }
            }
        }
        if let Some(c) = &colors {
            if c.len() != n {
                return Err(Error::LengthMismatch {
                    what: "vertex colors",
                    expected: n,
                    found: c.len(),
                });
            }
            if let Some(index) = c
                .iter()
                .position(|rgb| rgb.iter().any(|v| !(0.0..=1.0).contains(v)))
            {
                return Err(Error::ColorOutOfRange { index });
            }
        }
        let normals = match normals {
            Some(ns) => {
                if ns.len() != n {
                    return Err(Error::LengthMismatch {
                        what: "vertex normals",
                        expected: n,
                        found: ns.len(),
                    });
                }
                Some(
                    ns.into_iter()
                        .map(|v| {
                            let len = v.norm();
                            if len > 0.0 {
                                v / len
                            } else {
                                v
                            }
                        })
                        .collect(),
                )
            }
            None => None,
        };

        let before = triangles.len();
        let triangles: Vec<[u32; 3]> = triangles
            .into_iter()
            .filter(|t| triangle_area(&positions, t) > DEGENERATE_AREA)
            .collect();
        let dropped_degenerate = before - triangles.len();
        if dropped_degenerate > 0 {
            warn!("dropped {dropped_degenerate} degenerate triangle(s)");
        }

        Ok(Self {
            positions,
            triangles,
            colors,
            normals,
            dropped_degenerate,
        })
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn colors(&self) -> Option<&[[f32; 3]]> {
        self.colors.as_deref()
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    /// Number of triangles removed at construction for having (near) zero area.
    pub fn dropped_degenerate(&self) -> usize {
        self.dropped_degenerate
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    #[inline]
    pub fn corners(&self, tri: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[tri];
        [
            self.positions[a as usize],
            self.positions[b as usize],
            self.positions[c as usize],
        ]
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::empty();
        for t in &self.triangles {
            for &i in t {
                b.grow(self.positions[i as usize]);
            }
        }
        b
    }

    pub fn with_colors(mut self, colors: Vec<[f32; 3]>) -> Result<Self> {
        if colors.len() != self.positions.len() {
            return Err(Error::LengthMismatch {
                what: "vertex colors",
                expected: self.positions.len(),
                found: colors.len(),
            });
        }
        if let Some(index) = colors
            .iter()
            .position(|rgb| rgb.iter().any(|v| !(0.0..=1.0).contains(v)))
        {
            return Err(Error::ColorOutOfRange { index });
        }
        self.colors = Some(colors);
        Ok(self)
    }

    /// Area-weighted vertex normals. Uses stored normals when present.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        if let Some(n) = &self.normals {
            return n.clone();
        }
        let mut acc = vec![Vec3::zeros(); self.positions.len()];
        for t in &self.triangles {
            let [a, b, c] = t.map(|i| self.positions[i as usize]);
            // cross product length is twice the area, so this is area-weighted
            let n = (b - a).cross(&(c - a));
            for &i in t {
                acc[i as usize] += n;
            }
        }
        acc.into_iter()
            .map(|v| {
                let len = v.norm();
                if len > 0.0 {
                    v / len
                } else {
                    v
                }
            })
            .collect()
    }

    /// Total surface area.
    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| triangle_area(&self.positions, t))
            .sum()
    }

    /// Concatenates meshes, keeping colors only if every part has them.
    pub fn merge(parts: &[TriangleMesh]) -> Result<TriangleMesh> {
        let mut positions = Vec::new();
        let mut triangles = Vec::new();
        let all_colored = parts.iter().all(|m| m.colors.is_some());
        let mut colors = Vec::new();
        for m in parts {
            let base = positions.len() as u32;
            positions.extend_from_slice(&m.positions);
            triangles.extend(m.triangles.iter().map(|t| t.map(|i| i + base)));
            if all_colored {
                colors.extend_from_slice(m.colors.as_ref().unwrap());
            }
        }
        TriangleMesh::new(
            positions,
            triangles,
            all_colored.then_some(colors),
            None,
        )
    }

    /// Applies `f` to every vertex position. Stored normals are discarded.
    pub fn map_positions(&self, f: impl Fn(Vec3) -> Vec3) -> TriangleMesh {
        TriangleMesh {
            positions: self.positions.iter().map(|&p| f(p)).collect(),
            triangles: self.triangles.clone(),
            colors: self.colors.clone(),
            normals: None,
            dropped_degenerate: self.dropped_degenerate,
        }
    }
}

pub(crate) fn triangle_area(positions: &[Vec3], t: &[u32; 3]) -> f64 {
    let [a, b, c] = t.map(|i| positions[i as usize]);
    0.5 * (b - a).cross(&(c - a)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn drops_degenerate_triangles() {
        let m = TriangleMesh::new(
            vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.), v(2., 0., 0.)],
            vec![[0, 1, 2], [0, 1, 3], [2, 2, 1]],
            None,
            None,
        )
        .unwrap();
        assert_eq!(m.triangle_count(), 1);
        assert_eq!(m.dropped_degenerate(), 2);
    }

    #[test]
    fn rejects_bad_index() {
        let err = TriangleMesh::new(vec![v(0., 0., 0.)], vec![[0, 0, 5]], None, None);
        assert!(matches!(err, Err(Error::IndexOutOfRange { index: 5, .. })));
    }

    #[test]
    fn rejects_out_of_range_color() {
        let err = TriangleMesh::new(
            vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.)],
            vec![[0, 1, 2]],
            Some(vec![[0.0; 3], [1.0; 3], [1.5, 0.0, 0.0]]),
            None,
        );
        assert!(matches!(err, Err(Error::ColorOutOfRange { index: 2 })));
    }

    #[test]
    fn vertex_normals_of_flat_quad() {
        let m = TriangleMesh::new(
            vec![v(-1., -1., 0.), v(1., -1., 0.), v(1., 1., 0.), v(-1., 1., 0.)],
            vec![[0, 1, 2], [0, 2, 3]],
            None,
            None,
        )
        .unwrap();
        for n in m.vertex_normals() {
            assert!((n - v(0., 0., 1.)).norm() < 1e-15);
        }
        assert!((m.area() - 4.0).abs() < 1e-15);
    }
}
