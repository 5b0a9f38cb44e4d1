//! Deterministic stand-in for licensed body models: a torso capsule with
//! capsule limbs hanging off it, rigged and blendshaped like SMPL.
//!
//! The rest pose lies in the `z = 0` plane facing +Z: legs point down, arms
//! out to the sides, head up. Limb slots are filled round-robin (left leg,
//! right leg, left arm, right arm, head once, then legs and arms again), each
//! new joint extending the chain of its slot.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::BodyModel;
use crate::geometry::shapes::capsule_parts;
use crate::geometry::Vec3;

/// One limb segment of the toy body in its rest pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    /// Proximal end, which is also the joint location.
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
    pub joint: usize,
    /// Number of vertices around each ring of the tessellation.
    pub segments: usize,
}

impl Capsule {
    /// Distance from `p` to the capsule axis segment.
    pub fn axis_distance(&self, p: Vec3) -> f64 {
        let d = self.b - self.a;
        let t = ((p - self.a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
        (p - (self.a + d * t)).norm()
    }
}

#[derive(Debug, Clone)]
pub struct ToyBody {
    pub model: BodyModel,
    pub capsules: Vec<Capsule>,
    /// Vertex range of each capsule in the template.
    pub vertex_ranges: Vec<std::ops::Range<usize>>,
}

pub const TOY_SHAPE_COUNT: usize = 10;

#[derive(Clone, Copy)]
enum Slot {
    LeftLeg,
    RightLeg,
    LeftArm,
    RightArm,
    Head,
}

fn slot_sequence(joints: usize) -> Vec<Slot> {
    use Slot::*;
    let mut out = Vec::with_capacity(joints);
    let first = [LeftLeg, RightLeg, LeftArm, RightArm, Head];
    let rest = [LeftLeg, RightLeg, LeftArm, RightArm];
    for j in 0..joints.saturating_sub(1) {
        out.push(if j < first.len() {
            first[j]
        } else {
            rest[(j - first.len()) % rest.len()]
        });
    }
    out
}

/// Builds the toy body. `vertex_budget` is split evenly across the `joints`
/// capsules; the actual vertex count is close to, and at most, the budget
/// (with a floor of 8 segments by 5 rings per capsule).
pub fn generate_toy_body(joints: usize, vertex_budget: usize, seed: u64) -> ToyBody {
    assert!(joints >= 2, "toy body needs at least two joints");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |x: f64| x * (1.0 + 0.08 * (rng.gen::<f64>() * 2.0 - 1.0));

    let lift = Vec3::new(0.0, 0.2, 0.0);
    let torso_a = Vec3::new(0.0, -0.25, 0.0) + lift;
    let torso_b = Vec3::new(0.0, 0.25, 0.0) + lift;
    let mut capsules = vec![Capsule {
        a: torso_a,
        b: torso_b,
        radius: jitter(0.16),
        joint: 0,
        segments: 0,
    }];
    let mut parents = vec![None];
    // per slot: (last joint, chain end point, direction, length, radius)
    let mut chains: [Option<(usize, Vec3)>; 5] = [None; 5];
    for (k, slot) in slot_sequence(joints).into_iter().enumerate() {
        let joint = k + 1;
        let (si, anchor, dir, len, rad) = match slot {
            Slot::LeftLeg => (0, Vec3::new(0.09, -0.31, 0.0) + lift, Vec3::new(0.0, -1.0, 0.0), 0.36, 0.065),
            Slot::RightLeg => (1, Vec3::new(-0.09, -0.31, 0.0) + lift, Vec3::new(0.0, -1.0, 0.0), 0.36, 0.065),
            Slot::LeftArm => (2, Vec3::new(0.2, 0.22, 0.0) + lift, Vec3::new(1.0, -0.25, 0.0), 0.27, 0.045),
            Slot::RightArm => (3, Vec3::new(-0.2, 0.22, 0.0) + lift, Vec3::new(-1.0, -0.25, 0.0), 0.27, 0.045),
            Slot::Head => (4, Vec3::new(0.0, 0.38, 0.0) + lift, Vec3::new(0.0, 1.0, 0.0), 0.1, 0.1),
        };
        let depth_scale;
        let (parent, start) = match chains[si] {
            Some((last, end)) => {
                depth_scale = 0.9;
                (last, end)
            }
            None => {
                depth_scale = 1.0;
                (0, anchor)
            }
        };
        let end = start + dir.normalize() * jitter(len * depth_scale);
        capsules.push(Capsule {
            a: start,
            b: end,
            radius: jitter(rad * depth_scale),
            joint,
            segments: 0,
        });
        parents.push(Some(parent));
        chains[si] = Some((joint, end));
    }

    // tessellation
    let per = (vertex_budget / joints).max(8 * 5 + 2);
    let mut segments = ((per as f64).sqrt() * 1.2).round() as usize;
    segments = (segments.max(8) / 2) * 2;
    let rings = ((per - 2) / segments).max(5);
    let cap_rings = (rings / 4).max(2);
    let body_rings = rings.saturating_sub(2 * cap_rings);

    let mut template = Vec::new();
    let mut faces = Vec::new();
    let mut vertex_ranges = Vec::new();
    let mut owner = Vec::new();
    let mut proximal_ring = Vec::new();
    for c in capsules.iter_mut() {
        c.segments = segments;
        let (pos, tris) = capsule_parts(c.a, c.b, c.radius, segments, cap_rings, body_rings);
        let base = template.len();
        // ring `cap_rings - 1` is the equator around the proximal end
        let ring_start = base + 1 + (cap_rings - 1) * segments;
        proximal_ring.push(ring_start..ring_start + segments);
        faces.extend(tris.iter().map(|t| t.map(|i| i + base as u32)));
        owner.extend(std::iter::repeat_n(c.joint, pos.len()));
        template.extend(pos);
        vertex_ranges.push(base..template.len());
    }
    let v = template.len();

    // skinning: blend into the parent near the proximal end
    let mut weights = vec![0f32; v * joints];
    for (vi, p) in template.iter().enumerate() {
        let c = &capsules[owner[vi]];
        let j = c.joint;
        match parents[j] {
            None => weights[vi * joints + j] = 1.0,
            Some(pj) => {
                let d = c.b - c.a;
                let s = (p - c.a).dot(&d) / d.norm_squared();
                let wp = if s < 0.2 {
                    0.5 * (1.0 - s.max(0.0) / 0.2)
                } else {
                    0.0
                };
                weights[vi * joints + j] = (1.0 - wp) as f32;
                weights[vi * joints + pj] = wp as f32;
            }
        }
    }

    // joint regressor: mean of the proximal equator ring of each capsule
    let mut regressor = vec![0f32; joints * v];
    for (j, ring) in proximal_ring.iter().enumerate() {
        let w = 1.0 / ring.len() as f32;
        for vi in ring.clone() {
            regressor[j * v + vi] = w;
        }
    }

    // shape blendshapes: inflation, height, width, then seeded smooth fields
    let s = TOY_SHAPE_COUNT;
    let mut shape_dirs = vec![0f32; v * 3 * s];
    let waves: Vec<(Vec3, [f64; 3], f64)> = (3..s)
        .map(|_| {
            let k = Vec3::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            let phase = [rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3)];
            (k, phase, rng.gen_range(0.005..0.015))
        })
        .collect();
    for (vi, p) in template.iter().enumerate() {
        let c = &capsules[owner[vi]];
        let d = (c.b - c.a).normalize();
        let rel = p - c.a;
        let radial = rel - d * rel.dot(&d);
        let radial = if radial.norm() > 1e-12 {
            radial.normalize()
        } else {
            Vec3::zeros()
        };
        let mut set = |k: usize, disp: Vec3| {
            for ci in 0..3 {
                shape_dirs[(vi * 3 + ci) * s + k] = disp[ci] as f32;
            }
        };
        set(0, radial * 0.02);
        set(1, Vec3::new(0.0, 0.05 * p.y, 0.0));
        set(2, Vec3::new(0.05 * p.x, 0.0, 0.0));
        for (k, (wave, phase, amp)) in waves.iter().enumerate() {
            let a = wave.dot(p);
            set(3 + k, Vec3::new((a + phase[0]).sin(), (a + phase[1]).sin(), (a + phase[2]).sin()) * *amp);
        }
    }

    // pose blendshapes: smooth, local to the joint's own capsule
    let p_count = 9 * (joints - 1);
    let mut pose_dirs = vec![0f32; v * 3 * p_count];
    let pose_waves: Vec<(f64, f64)> = (0..p_count * 3)
        .map(|_| (rng.gen_range(1.0..6.0), rng.gen_range(0.0..6.3)))
        .collect();
    for (vi, p) in template.iter().enumerate() {
        let j = owner[vi];
        if j == 0 {
            continue;
        }
        let block = 9 * (j - 1);
        for m in 0..9 {
            for ci in 0..3 {
                let (freq, phase) = pose_waves[(block + m) * 3 + ci];
                let val = 0.003 * (freq * (p.x + p.y) + phase).sin();
                pose_dirs[(vi * 3 + ci) * p_count + block + m] = val as f32;
            }
        }
    }

    let template: Vec<[f32; 3]> = template.iter().map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect();
    // keep the capsule descriptors consistent with the f32 template
    let capsules = capsules
        .into_iter()
        .map(|c| Capsule {
            a: c.a.map(|x| x as f32 as f64),
            b: c.b.map(|x| x as f32 as f64),
            ..c
        })
        .collect();
    let model = BodyModel::new(template, faces, weights, shape_dirs, s, pose_dirs, regressor, parents)
        .expect("toy body satisfies model invariants");
    ToyBody {
        model,
        capsules,
        vertex_ranges,
    }
}

/// The toy body model alone.
pub fn generate_toy_model(joints: usize, vertex_budget: usize, seed: u64) -> BodyModel {
    generate_toy_body(joints, vertex_budget, seed).model
}
