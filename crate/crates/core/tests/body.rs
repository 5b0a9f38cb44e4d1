mod common;

use common::{iou, line_segment_distance, orthographic, perspective};
use peelkit::body::{
    apply_weak_perspective, generate_toy_body, load_lbsm, rodrigues, save_lbsm, BodyParams, ToyBody, WeakPerspective,
};
use peelkit::geometry::{Bvh, Camera, Projection, TriangleMesh, Vec3};
use peelkit::peel::render_prior_peel;
use peelkit::synth::{TOY_JOINTS, TOY_VERTICES};
use proptest::prelude::*;

fn toy() -> ToyBody {
    generate_toy_body(TOY_JOINTS, TOY_VERTICES, 7)
}

#[test]
fn rest_pose_is_template() {
    let t = toy();
    let params = BodyParams::zeros(&t.model);
    let mesh = t.model.evaluate(&params).unwrap();
    assert_eq!(mesh.positions(), t.model.template().as_slice());
}

#[test]
fn root_rotation_is_rigid() {
    let t = toy();
    let mut params = BodyParams::zeros(&t.model);
    let root = t.model.root();
    params.theta[3 * root + 1] = std::f64::consts::FRAC_PI_2;
    let posed = t.model.posed_vertices(&params).unwrap();
    let template = t.model.template();
    let pivot = t.model.regress_joints(&template)[root];
    let r = rodrigues(Vec3::new(0.0, std::f64::consts::FRAC_PI_2, 0.0));
    for (p, v) in posed.iter().zip(&template) {
        // about +Y by 90°: x -> z, z -> -x
        let d = v - pivot;
        let expect = pivot + Vec3::new(d.z, d.y, -d.x);
        assert!((p - expect).norm() < 1e-6);
        assert!((p - (pivot + r * d)).norm() < 1e-6);
    }
}

#[test]
fn first_shape_coefficient_adds_its_basis() {
    let t = toy();
    let mut params = BodyParams::zeros(&t.model);
    params.beta[0] = 1.0;
    let out = t.model.posed_vertices(&params).unwrap();
    let s = t.model.shape_count();
    for (v, (p, base)) in out.iter().zip(t.model.template()).enumerate() {
        for c in 0..3 {
            let dir = t.model.shape_dirs()[(v * 3 + c) * s] as f64;
            assert!((p[c] - (base[c] + dir)).abs() < 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn shape_is_linear(a in prop::collection::vec(-2.0f64..2.0, 10), b in prop::collection::vec(-2.0f64..2.0, 10)) {
        let t = generate_toy_body(6, 1500, 1);
        let eval = |beta: &[f64]| {
            let mut p = BodyParams::zeros(&t.model);
            p.beta = beta.to_vec();
            t.model.posed_vertices(&p).unwrap()
        };
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let zero = t.model.template();
        let (va, vb, vs) = (eval(&a), eval(&b), eval(&sum));
        for i in 0..zero.len() {
            let lin = va[i] + vb[i] - zero[i];
            prop_assert!((vs[i] - lin).norm() < 1e-6);
        }
    }

    #[test]
    fn weights_and_regressor_normalized(joints in 2usize..14, budget in 200usize..4000, seed in any::<u64>()) {
        let m = generate_toy_body(joints, budget, seed).model;
        let j = m.joint_count();
        prop_assert_eq!(j, joints);
        for row in m.weights().chunks(j) {
            prop_assert!(row.iter().all(|&w| w >= 0.0));
            prop_assert!((row.iter().map(|&w| w as f64).sum::<f64>() - 1.0).abs() < 1e-5);
        }
        for row in m.joint_regressor().chunks(m.vertex_count()) {
            prop_assert!((row.iter().map(|&w| w as f64).sum::<f64>() - 1.0).abs() < 1e-4);
        }
        prop_assert_eq!(m.parents().iter().filter(|p| p.is_none()).count(), 1);
    }
}

#[test]
fn lbsm_round_trip_is_lossless() {
    let t = toy();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.lbsm");
    save_lbsm(&t.model, &path).unwrap();
    assert_eq!(load_lbsm(&path).unwrap(), t.model);
}

#[test]
fn weak_perspective_silhouette_overlap() {
    let t = toy();
    let mut params = BodyParams::zeros(&t.model);
    params.theta[3 * 2] = 0.3;
    let mesh = t.model.evaluate(&params).unwrap();
    let wp = WeakPerspective { s: 1.4, tx: 0.1, ty: -0.05 };
    let moved = apply_weak_perspective(&mesh, &wp).unwrap();
    let cam = orthographic(256);
    let a = render_prior_peel(&moved, &Bvh::build(&moved).unwrap(), &cam, 1).unwrap().support(0);
    // the same view of the untouched mesh: shifted and zoomed camera
    let hh = peelkit::geometry::DEFAULT_HALF_HEIGHT / wp.s;
    let reference = Camera::new(
        Vec3::new(-wp.tx, -wp.ty, 10.0),
        Vec3::x(),
        Vec3::y(),
        -Vec3::z(),
        Projection::Orthographic { half_height: hh },
        256,
        256,
    )
    .unwrap();
    let b = render_prior_peel(&mesh, &Bvh::build(&mesh).unwrap(), &reference, 1).unwrap().support(0);
    let score = iou(&a, &b);
    assert!(score >= 0.95, "IoU {score}");
}

#[test]
fn non_positive_scale_rejected() {
    let mesh = toy().model.template_mesh().unwrap();
    for s in [0.0, -1.0, f64::NAN] {
        let wp = WeakPerspective { s, tx: 0.0, ty: 0.0 };
        assert!(matches!(
            apply_weak_perspective(&mesh, &wp),
            Err(peelkit::Error::NonPositiveScale(_))
        ));
    }
}

/// Radius of the largest capsule around each limb axis that fits inside its
/// convex tessellation.
fn inner_radii(t: &ToyBody, mesh: &TriangleMesh) -> Vec<f64> {
    t.capsules
        .iter()
        .zip(&t.vertex_ranges)
        .map(|(c, range)| {
            let mut rho = f64::INFINITY;
            for (i, f) in mesh.triangles().iter().enumerate() {
                if !f.iter().all(|&v| range.contains(&(v as usize))) {
                    continue;
                }
                let [p0, p1, p2] = mesh.corners(i);
                let n = (p1 - p0).cross(&(p2 - p0)).normalize();
                rho = rho.min((p0 - c.a).dot(&n)).min((p0 - c.b).dot(&n));
            }
            rho
        })
        .collect()
}

#[test]
fn prior_silhouette_matches_capsules() {
    let t = toy();
    let mesh = t.model.evaluate(&BodyParams::zeros(&t.model)).unwrap();
    let cam = perspective(256);
    let stack = render_prior_peel(&mesh, &Bvh::build(&mesh).unwrap(), &cam, 4).unwrap();
    let inner = inner_radii(&t, &mesh);
    let counts = stack.hit_counts();
    let support = stack.support(0);
    let (mut decided, mut band, mut single) = (0usize, 0usize, 0usize);
    for y in 0..256 {
        for x in 0..256 {
            let ray = cam.ray(x, y);
            let d: Vec<f64> = t
                .capsules
                .iter()
                .map(|c| line_segment_distance(ray.origin, ray.direction(), c.a, c.b))
                .collect();
            let inside: Vec<usize> = (0..d.len()).filter(|&i| d[i] < inner[i]).collect();
            let outside = (0..d.len()).all(|i| d[i] > t.capsules[i].radius + 1e-6);
            let hit = *support.get(x, y) != 0;
            if !inside.is_empty() {
                assert!(hit, "pixel ({x}, {y}) passes through a limb but is empty");
                decided += 1;
            } else if outside {
                assert!(!hit, "pixel ({x}, {y}) misses every limb but is covered");
                decided += 1;
            } else {
                band += 1;
            }
            let clear_of_others = (0..d.len()).filter(|&i| d[i] <= t.capsules[i].radius + 1e-6).count() == 1;
            if inside.len() == 1 && clear_of_others {
                assert_eq!(*counts.get(x, y), 2, "single-limb pixel ({x}, {y})");
                single += 1;
            }
        }
    }
    // undecided pixels sit in the sub-pixel gap between tessellation and
    // true capsule, a one-pixel rim at most
    assert!(band * 10 < support.count(), "{band} undecided of {}", support.count());
    assert!(single > 1000, "{single} single-limb pixels");
    assert_eq!(decided + band, 256 * 256);
}
