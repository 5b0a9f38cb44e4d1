use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{TriangleMesh, Vec3};

const WEIGHT_SUM_TOL: f64 = 1e-5;
const REGRESSOR_SUM_TOL: f64 = 1e-4;

/// A linear-blend-skinned body: rest template, shape and pose blendshapes,
/// skinning weights, joint regressor and kinematic tree.
///
/// Tensors are stored in `f32`, exactly as in the on-disk format, so a
/// save/load round trip is lossless. Evaluation runs in `f64`.
///
/// Layouts (row-major):
/// - `weights`: `V × J`
/// - `shape_dirs`: `V × 3 × S`
/// - `pose_dirs`: `V × 3 × P` with `P = 9 (J − 1)`; feature block `k` belongs
///   to the `k`-th non-root joint in index order and holds the row-major
///   entries of `R − I`
/// - `joint_regressor`: `J × V`
#[derive(Debug, Clone, PartialEq)]
pub struct BodyModel {
    pub(crate) template: Vec<[f32; 3]>,
    pub(crate) faces: Vec<[u32; 3]>,
    pub(crate) weights: Vec<f32>,
    pub(crate) shape_dirs: Vec<f32>,
    pub(crate) pose_dirs: Vec<f32>,
    pub(crate) joint_regressor: Vec<f32>,
    pub(crate) parents: Vec<Option<usize>>,
    pub(crate) num_shape: usize,
    order: Vec<usize>,
}

impl BodyModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        template: Vec<[f32; 3]>,
        faces: Vec<[u32; 3]>,
        weights: Vec<f32>,
        shape_dirs: Vec<f32>,
        num_shape: usize,
        pose_dirs: Vec<f32>,
        joint_regressor: Vec<f32>,
        parents: Vec<Option<usize>>,
    ) -> Result<Self> {
        let v = template.len();
        let j = parents.len();
        let bad = |m: String| Err(Error::InvalidModel(m));
        if j == 0 || v == 0 {
            return bad("model needs at least one joint and one vertex".into());
        }
        let expect = |what: &'static str, found: usize, expected: usize| {
            if found != expected {
                Err(Error::DimensionMismatch {
                    what,
                    expected,
                    found,
                })
            } else {
                Ok(())
            }
        };
        expect("skinning weights", weights.len(), v * j)?;
        expect("shape blendshapes", shape_dirs.len(), v * 3 * num_shape)?;
        expect("pose blendshapes", pose_dirs.len(), v * 3 * 9 * (j - 1))?;
        expect("joint regressor", joint_regressor.len(), j * v)?;
        if let Some(f) = faces.iter().position(|f| f.iter().any(|&i| i as usize >= v)) {
            return bad(format!("face {f} references a missing vertex"));
        }

        for (vi, row) in weights.chunks(j).enumerate() {
            if row.iter().any(|&w| w < 0.0 || !w.is_finite()) {
                return bad(format!("negative skinning weight at vertex {vi}"));
            }
            let s: f64 = row.iter().map(|&w| w as f64).sum();
            if (s - 1.0).abs() > WEIGHT_SUM_TOL {
                return bad(format!("skinning weights of vertex {vi} sum to {s}"));
            }
        }
        for (ji, row) in joint_regressor.chunks(v).enumerate() {
            let s: f64 = row.iter().map(|&w| w as f64).sum();
            if (s - 1.0).abs() > REGRESSOR_SUM_TOL {
                return bad(format!("joint regressor row {ji} sums to {s}"));
            }
        }
        let order = topological_order(&parents).map_err(Error::InvalidModel)?;

        Ok(Self {
            template,
            faces,
            weights,
            shape_dirs,
            pose_dirs,
            joint_regressor,
            parents,
            num_shape,
            order,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.template.len()
    }
    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }
    pub fn shape_count(&self) -> usize {
        self.num_shape
    }
    pub fn pose_feature_count(&self) -> usize {
        9 * (self.joint_count() - 1)
    }
    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }
    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }
    pub fn weights(&self) -> &[f32] {
        &self.weights
    }
    pub fn shape_dirs(&self) -> &[f32] {
        &self.shape_dirs
    }
    pub fn pose_dirs(&self) -> &[f32] {
        &self.pose_dirs
    }
    pub fn joint_regressor(&self) -> &[f32] {
        &self.joint_regressor
    }

    pub fn template(&self) -> Vec<Vec3> {
        self.template.iter().map(to_vec3).collect()
    }

    pub fn root(&self) -> usize {
        self.order[0]
    }

    /// Copy of the model with every pose blendshape set to zero.
    pub fn without_pose_blendshapes(&self) -> Self {
        let mut m = self.clone();
        m.pose_dirs.iter_mut().for_each(|x| *x = 0.0);
        m
    }

    /// Rest-pose mesh (the template with the model's faces).
    pub fn template_mesh(&self) -> Result<TriangleMesh> {
        TriangleMesh::new(self.template(), self.faces.clone(), None, None)
    }

    /// Template plus shape blendshapes.
    pub fn shaped_vertices(&self, beta: &[f64]) -> Result<Vec<Vec3>> {
        if beta.len() != self.num_shape {
            return Err(Error::DimensionMismatch {
                what: "shape coefficients",
                expected: self.num_shape,
                found: beta.len(),
            });
        }
        let s = self.num_shape;
        Ok(self
            .template
            .iter()
            .enumerate()
            .map(|(v, t)| {
                let mut p = to_vec3(t);
                for c in 0..3 {
                    let dirs = &self.shape_dirs[(v * 3 + c) * s..(v * 3 + c + 1) * s];
                    let mut d = 0.0;
                    for (b, &k) in beta.iter().zip(dirs) {
                        d += b * k as f64;
                    }
                    p[c] += d;
                }
                p
            })
            .collect())
    }

    /// Joint locations regressed from `vertices`.
    pub fn regress_joints(&self, vertices: &[Vec3]) -> Vec<Vec3> {
        let v = self.vertex_count();
        self.joint_regressor
            .chunks(v)
            .map(|row| {
                row.iter()
                    .zip(vertices)
                    .filter(|(w, _)| **w != 0.0)
                    .fold(Vec3::zeros(), |acc, (&w, p)| acc + p * w as f64)
            })
            .collect()
    }

    /// Posed vertex positions for `params` (weak-perspective camera ignored).
    ///
    /// Order of operations: shape blendshapes, joint regression from the
    /// shaped vertices, pose blendshapes, then linear blend skinning along
    /// the kinematic chain. Skinning is accumulated as a displacement from
    /// the blendshaped vertex so that the rest pose reproduces it bit-exactly.
    pub fn posed_vertices(&self, params: &BodyParams) -> Result<Vec<Vec3>> {
        let j = self.joint_count();
        if params.theta.len() != 3 * j {
            return Err(Error::DimensionMismatch {
                what: "pose parameters",
                expected: 3 * j,
                found: params.theta.len(),
            });
        }
        if params.beta.iter().chain(&params.theta).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite shape or pose entry".into()));
        }
        let shaped = self.shaped_vertices(&params.beta)?;
        let joints = self.regress_joints(&shaped);
        let local: Vec<Matrix3<f64>> = params
            .theta
            .chunks(3)
            .map(|w| rodrigues(wrap_axis_angle(Vec3::new(w[0], w[1], w[2]))))
            .collect();

        // pose features: (R - I) of every non-root joint, in index order
        let root = self.root();
        let mut features = Vec::with_capacity(self.pose_feature_count());
        for (ji, r) in local.iter().enumerate() {
            if ji == root {
                continue;
            }
            let d = r - Matrix3::identity();
            for row in 0..3 {
                for col in 0..3 {
                    features.push(d[(row, col)]);
                }
            }
        }
        let p = features.len();
        let mut posed: Vec<Vec3> = shaped;
        if features.iter().any(|&f| f != 0.0) {
            for (v, pos) in posed.iter_mut().enumerate() {
                for c in 0..3 {
                    let dirs = &self.pose_dirs[(v * 3 + c) * p..(v * 3 + c + 1) * p];
                    let mut d = 0.0;
                    for (f, &k) in features.iter().zip(dirs) {
                        d += f * k as f64;
                    }
                    pos[c] += d;
                }
            }
        }

        // global rotations and joint displacements along the chain
        let mut global = vec![Matrix3::identity(); j];
        let mut disp = vec![Vec3::zeros(); j];
        for &ji in &self.order {
            match self.parents[ji] {
                None => global[ji] = local[ji],
                Some(pi) => {
                    global[ji] = global[pi] * local[ji];
                    disp[ji] = disp[pi] + (global[pi] - Matrix3::identity()) * (joints[ji] - joints[pi]);
                }
            }
        }
        let delta: Vec<Matrix3<f64>> = global.iter().map(|g| g - Matrix3::identity()).collect();

        Ok(posed
            .iter()
            .enumerate()
            .map(|(v, x)| {
                let mut acc = Vec3::zeros();
                for (ji, &w) in self.weights[v * j..(v + 1) * j].iter().enumerate() {
                    if w != 0.0 {
                        acc += (delta[ji] * (x - joints[ji]) + disp[ji]) * w as f64;
                    }
                }
                x + acc
            })
            .collect())
    }

    /// Evaluates the body mesh for shape/pose parameters (camera ignored).
    pub fn evaluate(&self, params: &BodyParams) -> Result<TriangleMesh> {
        let verts = self.posed_vertices(params)?;
        TriangleMesh::new(verts, self.faces.clone(), None, None)
    }
}

fn to_vec3(p: &[f32; 3]) -> Vec3 {
    Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64)
}

fn topological_order(parents: &[Option<usize>]) -> std::result::Result<Vec<usize>, String> {
    let n = parents.len();
    let roots: Vec<usize> = (0..n).filter(|&j| parents[j].is_none()).collect();
    if roots.len() != 1 {
        return Err(format!("kinematic tree needs exactly one root, found {}", roots.len()));
    }
    let mut children = vec![Vec::new(); n];
    for (j, p) in parents.iter().enumerate() {
        if let Some(p) = *p {
            if p >= n {
                return Err(format!("joint {j} has out-of-range parent {p}"));
            }
            children[p].push(j);
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![roots[0]];
    while let Some(j) = stack.pop() {
        order.push(j);
        stack.extend(children[j].iter().rev());
    }
    if order.len() != n {
        return Err("kinematic tree contains a cycle".into());
    }
    Ok(order)
}

/// Reduces an axis-angle vector so its angle is below 2π (same rotation).
pub fn wrap_axis_angle(w: Vec3) -> Vec3 {
    let angle = w.norm();
    let tau = std::f64::consts::TAU;
    if angle < tau {
        w
    } else {
        w * ((angle % tau) / angle)
    }
}

/// Rotation matrix of an axis-angle vector. The zero vector maps to the
/// identity exactly.
pub fn rodrigues(w: Vec3) -> Matrix3<f64> {
    let angle = w.norm();
    let k = Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0);
    if angle < 1e-12 {
        return Matrix3::identity() + k;
    }
    let k = k / angle;
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// Weak-perspective alignment `(s, tx, ty)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakPerspective {
    pub s: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for WeakPerspective {
    fn default() -> Self {
        Self {
            s: 1.0,
            tx: 0.0,
            ty: 0.0,
        }
    }
}

/// Shape coefficients, per-joint axis-angle pose and weak-perspective camera.
///
/// JSON form: `{"beta": [...], "theta": [...], "s": 1.0, "tx": 0.0, "ty": 0.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    #[serde(flatten)]
    pub camera: WeakPerspective,
}

impl BodyParams {
    pub fn zeros(model: &BodyModel) -> Self {
        Self {
            beta: vec![0.0; model.shape_count()],
            theta: vec![0.0; 3 * model.joint_count()],
            camera: WeakPerspective::default(),
        }
    }
}

/// Brings a body mesh into the render frame: `x' = s (x + tx)`,
/// `y' = s (y + ty)`, `z' = s z`.
///
/// The body stays centered on the origin, which is where the default render
/// camera (at `(0, 0, 10)`, looking down −Z) points; rendering the result
/// with the same camera as the input image yields pixel-aligned prior maps.
pub fn apply_weak_perspective(mesh: &TriangleMesh, cam: &WeakPerspective) -> Result<TriangleMesh> {
    if !(cam.s > 0.0) || !cam.s.is_finite() {
        return Err(Error::NonPositiveScale(cam.s));
    }
    let WeakPerspective { s, tx, ty } = *cam;
    Ok(mesh.map_positions(|p| Vec3::new(s * (p.x + tx), s * (p.y + ty), s * p.z)))
}
