//! Procedural test meshes and uniform surface sampling.

use rand::Rng;

use super::{TriangleMesh, Vec3};

/// Builds a closed surface of revolution around the segment starting at
/// `base` with unit axis `axis`. `rings` lists `(offset along axis, radius)`
/// from one pole to the other; the poles themselves sit at `pole_start` and
/// `pole_end` offsets. Ring vertex 0 lies along `e1`, where `(e1, e2, axis)`
/// is right-handed; faces are wound outward.
fn revolve(
    base: Vec3,
    axis: Vec3,
    e1: Vec3,
    rings: &[(f64, f64)],
    pole_start: f64,
    pole_end: f64,
    segments: usize,
) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let e2 = axis.cross(&e1);
    let mut positions = Vec::with_capacity(rings.len() * segments + 2);
    positions.push(base + axis * pole_start);
    for &(off, rad) in rings {
        for j in 0..segments {
            let phi = std::f64::consts::TAU * j as f64 / segments as f64;
            positions.push(base + axis * off + (e1 * phi.cos() + e2 * phi.sin()) * rad);
        }
    }
    let end_pole = positions.len() as u32;
    positions.push(base + axis * pole_end);

    let idx = |ring: usize, j: usize| (1 + ring * segments + j % segments) as u32;
    let mut tris = Vec::with_capacity(2 * rings.len() * segments);
    for j in 0..segments {
        tris.push([0, idx(0, j + 1), idx(0, j)]);
    }
    for i in 0..rings.len() - 1 {
        for j in 0..segments {
            tris.push([idx(i, j), idx(i, j + 1), idx(i + 1, j)]);
            tris.push([idx(i, j + 1), idx(i + 1, j + 1), idx(i + 1, j)]);
        }
    }
    let last = rings.len() - 1;
    for j in 0..segments {
        tris.push([idx(last, j), idx(last, j + 1), end_pole]);
    }
    (positions, tris)
}

fn perpendicular(axis: &Vec3) -> Vec3 {
    let helper = if axis.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
    let p = helper - axis * axis.dot(&helper);
    p.normalize()
}

/// Latitude/longitude sphere with its poles on the Y axis. With an even
/// `segments`, vertices sit exactly on the +Z and -Z extremes.
pub fn uv_sphere(center: Vec3, radius: f64, segments: usize, rings: usize) -> TriangleMesh {
    assert!(segments >= 3 && rings >= 2);
    let ring_list: Vec<(f64, f64)> = (1..rings)
        .map(|k| {
            let theta = std::f64::consts::PI * k as f64 / rings as f64;
            (-radius * theta.cos(), radius * theta.sin())
        })
        .collect();
    let (p, t) = revolve(center, Vec3::y(), Vec3::z(), &ring_list, -radius, radius, segments);
    TriangleMesh::new(p, t, None, None).expect("valid sphere")
}

/// Geodesic sphere: an icosahedron subdivided `level` times (20·4^level faces).
pub fn icosphere(center: Vec3, radius: f64, level: usize) -> TriangleMesh {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1., g, 0.),
        (1., g, 0.),
        (-1., -g, 0.),
        (1., -g, 0.),
        (0., -1., g),
        (0., 1., g),
        (0., -1., -g),
        (0., 1., -g),
        (g, 0., -1.),
        (g, 0., 1.),
        (-g, 0., -1.),
        (-g, 0., 1.),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache = std::collections::HashMap::new();
        let mut mid = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                verts.len() as u32 - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let positions = verts.into_iter().map(|v| center + v * radius).collect();
    TriangleMesh::new(positions, faces, None, None).expect("valid icosphere")
}

/// Axis-aligned box with the given center and edge length, two triangles
/// per face, wound outward.
pub fn cube(center: Vec3, size: f64) -> TriangleMesh {
    let h = size * 0.5;
    let positions: Vec<Vec3> = (0..8)
        .map(|i| {
            center
                + Vec3::new(
                    if i & 1 == 0 { -h } else { h },
                    if i & 2 == 0 { -h } else { h },
                    if i & 4 == 0 { -h } else { h },
                )
        })
        .collect();
    let quads = [
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
    ];
    let mut tris = Vec::new();
    for [a, b, c, d] in quads {
        tris.push([a, b, c]);
        tris.push([a, c, d]);
    }
    TriangleMesh::new(positions, tris, None, None).expect("valid cube")
}

/// Square in the plane `z = z`, centered on the Z axis, facing +Z.
pub fn quad(z: f64, half: f64) -> TriangleMesh {
    TriangleMesh::new(
        vec![
            Vec3::new(-half, -half, z),
            Vec3::new(half, -half, z),
            Vec3::new(half, half, z),
            Vec3::new(-half, half, z),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
        None,
        None,
    )
    .expect("valid quad")
}

/// Closed capsule mesh around the segment `a`-`b`. `body_rings` intermediate
/// rings subdivide the cylinder; each hemispherical cap has `cap_rings` rings.
pub fn capsule(
    a: Vec3,
    b: Vec3,
    radius: f64,
    segments: usize,
    cap_rings: usize,
    body_rings: usize,
) -> TriangleMesh {
    let (p, t) = capsule_parts(a, b, radius, segments, cap_rings, body_rings);
    TriangleMesh::new(p, t, None, None).expect("valid capsule")
}

pub(crate) fn capsule_parts(
    a: Vec3,
    b: Vec3,
    radius: f64,
    segments: usize,
    cap_rings: usize,
    body_rings: usize,
) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    assert!(segments >= 3 && cap_rings >= 1);
    let d = b - a;
    let len = d.norm();
    let axis = d / len;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut rings = Vec::new();
    for k in 1..=cap_rings {
        let phi = half_pi * k as f64 / cap_rings as f64;
        rings.push((-radius * phi.cos(), radius * phi.sin()));
    }
    for j in 1..=body_rings {
        rings.push((len * j as f64 / (body_rings + 1) as f64, radius));
    }
    for k in (1..=cap_rings).rev() {
        let phi = half_pi * k as f64 / cap_rings as f64;
        rings.push((len + radius * phi.cos(), radius * phi.sin()));
    }
    revolve(a, axis, perpendicular(&axis), &rings, -radius, len + radius, segments)
}

/// Open truncated cone (lateral surface only) around the segment `a`-`b`,
/// with radius `ra` at `a` and `rb` at `b`.
pub fn open_frustum(a: Vec3, b: Vec3, ra: f64, rb: f64, segments: usize, rings: usize) -> TriangleMesh {
    let d = b - a;
    let len = d.norm();
    let axis = d / len;
    let e1 = perpendicular(&axis);
    let e2 = axis.cross(&e1);
    let mut positions = Vec::new();
    for i in 0..=rings {
        let s = i as f64 / rings as f64;
        let r = ra + (rb - ra) * s;
        for j in 0..segments {
            let phi = std::f64::consts::TAU * j as f64 / segments as f64;
            positions.push(a + axis * (len * s) + (e1 * phi.cos() + e2 * phi.sin()) * r);
        }
    }
    let idx = |i: usize, j: usize| (i * segments + j % segments) as u32;
    let mut tris = Vec::new();
    for i in 0..rings {
        for j in 0..segments {
            tris.push([idx(i, j), idx(i, j + 1), idx(i + 1, j)]);
            tris.push([idx(i, j + 1), idx(i + 1, j + 1), idx(i + 1, j)]);
        }
    }
    TriangleMesh::new(positions, tris, None, None).expect("valid frustum")
}

/// `n` points drawn uniformly (by area) from the mesh surface.
pub fn sample_surface<R: Rng>(mesh: &TriangleMesh, n: usize, rng: &mut R) -> Vec<Vec3> {
    let mut cdf = Vec::with_capacity(mesh.triangle_count());
    let mut acc = 0.0;
    for t in 0..mesh.triangle_count() {
        let [a, b, c] = mesh.corners(t);
        acc += 0.5 * (b - a).cross(&(c - a)).norm();
        cdf.push(acc);
    }
    (0..n)
        .map(|_| {
            let x = rng.gen::<f64>() * acc;
            let t = cdf.partition_point(|&c| c <= x).min(cdf.len() - 1);
            let [a, b, c] = mesh.corners(t);
            let (u, v): (f64, f64) = (rng.gen(), rng.gen());
            let su = u.sqrt();
            a * (1.0 - su) + b * (su * (1.0 - v)) + c * (su * v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn outward(mesh: &TriangleMesh, center: Vec3) -> bool {
        (0..mesh.triangle_count()).all(|t| {
            let [a, b, c] = mesh.corners(t);
            let n = (b - a).cross(&(c - a));
            n.dot(&((a + b + c) / 3.0 - center)) > 0.0
        })
    }

    #[test]
    fn icosphere_face_count() {
        let m = icosphere(Vec3::zeros(), 1.0, 2);
        assert_eq!(m.triangle_count(), 320);
        assert!(outward(&m, Vec3::zeros()));
        for p in m.positions() {
            assert!((p.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shapes_are_wound_outward() {
        assert!(outward(&uv_sphere(Vec3::zeros(), 1.0, 16, 8), Vec3::zeros()));
        assert!(outward(&cube(Vec3::zeros(), 1.0), Vec3::zeros()));
        let cap = capsule(Vec3::zeros(), Vec3::new(0.0, 1.0, 0.0), 0.2, 12, 4, 2);
        assert!(outward(&cap, Vec3::new(0.0, 0.5, 0.0)));
        assert_eq!(cube(Vec3::zeros(), 1.0).triangle_count(), 12);
    }

    #[test]
    fn uv_sphere_has_vertices_on_z_extremes() {
        let m = uv_sphere(Vec3::zeros(), 0.5, 32, 16);
        let has = |z: f64| m.positions().iter().any(|p| (p - Vec3::new(0.0, 0.0, z)).norm() < 1e-15);
        assert!(has(0.5) && has(-0.5));
    }

    #[test]
    fn samples_lie_on_surface() {
        let m = cube(Vec3::zeros(), 2.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for p in sample_surface(&m, 500, &mut rng) {
            let linf = p.abs().max();
            assert!((linf - 1.0).abs() < 1e-12);
        }
    }
}
