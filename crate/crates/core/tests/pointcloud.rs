mod common;

use common::{orthographic, perspective, planted_outliers};
use peelkit::geometry::{shapes, Bvh, Vec3};
use peelkit::metrics::surface_distances;
use peelkit::peel::{render_peel, PeelStack};
use peelkit::pointcloud::{backproject, estimate_normals, filter_outliers, ColoredPointCloud, Orientation};
use peelkit::spatial::KdTree;
use proptest::prelude::*;

fn sphere_stack(res: usize) -> (peelkit::geometry::TriangleMesh, PeelStack) {
    let mesh = peelkit::synth::colorize(shapes::icosphere(Vec3::zeros(), 1.0, 4), 0);
    let stack = render_peel(&mesh, &Bvh::build(&mesh).unwrap(), &perspective(res), 4).unwrap();
    (mesh, stack)
}

#[test]
fn sphere_points_lie_on_the_surface() {
    let (mesh, stack) = sphere_stack(128);
    let cloud = backproject(&stack, None, None).unwrap();
    assert_eq!(cloud.len(), stack.support(0).count() + stack.support(1).count());
    let bvh = Bvh::build(&mesh).unwrap();
    let diag = mesh.bounds().diagonal();
    let worst = surface_distances(&cloud.positions, &mesh, &bvh).into_iter().fold(0.0, f64::max);
    assert!(worst < 1e-6 * diag, "{worst}");
    // and on the analytic sphere up to the tessellation's chord sag
    for p in &cloud.positions {
        assert!(p.norm() <= 1.0 + 1e-6 && p.norm() > 0.99, "{}", p.norm());
    }
    assert!(cloud.layers.iter().all(|&l| l == 1 || l == 2));
}

#[test]
fn empty_stack_gives_empty_cloud() {
    let cam = orthographic(8);
    let stack = PeelStack::empty(cam, 4, false, peelkit::peel::DepthRange::around_origin(&cam));
    assert!(backproject(&stack, None, None).unwrap().is_empty());
}

#[test]
fn sphere_normals_face_the_camera() {
    let (_, stack) = sphere_stack(128);
    let cam = *stack.camera();
    let cloud = backproject(&stack, None, None).unwrap();
    let with = estimate_normals(&cloud, 16, &cam, Orientation::LayerParity).unwrap();
    let normals = with.normals.as_ref().unwrap();
    let (mut facing, mut total, mut close) = (0, 0, 0);
    for ((p, n), &l) in cloud.positions.iter().zip(normals).zip(&cloud.layers) {
        let exact = p.normalize();
        let view = cam.view_direction(*p);
        if l == 1 {
            total += 1;
            facing += usize::from(n.dot(&view) < 0.0);
            close += usize::from(n.dot(&exact) > 0.95);
        } else {
            // back layer faces away, along the outward normal
            assert!(n.dot(&view) > 0.0);
        }
    }
    assert!(facing as f64 >= 0.99 * total as f64);
    assert!(close as f64 >= 0.99 * total as f64, "{close} / {total}");

    let camera_only = estimate_normals(&cloud, 16, &cam, Orientation::CameraOnly).unwrap();
    for (p, n) in cloud.positions.iter().zip(camera_only.normals.unwrap()) {
        assert!(n.dot(&cam.view_direction(*p)) < 0.0);
    }
    assert!(estimate_normals(&cloud, cloud.len(), &cam, Orientation::LayerParity).is_err());
}

#[test]
fn filter_planted_small() {
    // 20k points are too sparse for 0.01 of the diagonal; scale accordingly
    let cloud = planted_outliers(20_000, 40);
    let kept = filter_outliers(&cloud, 16, 0.02).unwrap();
    assert_eq!(kept.len(), 20_000);
    assert_eq!(&kept.positions[..], &cloud.positions[..20_000]);
    assert_eq!(filter_outliers(&kept, 16, 0.02).unwrap(), kept);
    assert!(matches!(
        filter_outliers(&planted_outliers(10, 0), 16, 0.01),
        Err(peelkit::Error::TooFewPoints { .. })
    ));
}

#[test]
fn ply_keeps_normals_layers_and_scale() {
    let (_, stack) = sphere_stack(48);
    let cloud = backproject(&stack, None, None).unwrap();
    let cloud = estimate_normals(&cloud, 8, stack.camera(), Orientation::LayerParity).unwrap();
    let cloud = filter_outliers(&cloud, 8, 0.05).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ply");
    cloud.save_ply(&path).unwrap();
    let back = ColoredPointCloud::load_ply(&path).unwrap();
    assert_eq!(back.layers, cloud.layers);
    assert_eq!(back.unit_scale, cloud.unit_scale);
    for (a, b) in back.positions.iter().zip(&cloud.positions) {
        assert!((a - b).norm() < 1e-6);
    }
    for (a, b) in back.normals.unwrap().iter().zip(cloud.normals.as_ref().unwrap()) {
        assert!((a - b).norm() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn knn_matches_brute_force(
        pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..1500),
        q in (-1.5f64..1.5, -1.5f64..1.5, -1.5f64..1.5),
        k in 1usize..24,
    ) {
        let pts: Vec<Vec3> = pts.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect();
        let q = Vec3::new(q.0, q.1, q.2);
        let tree = KdTree::new(&pts);
        let got = tree.knn(&q, k);
        let mut all: Vec<(usize, f64)> = pts.iter().enumerate().map(|(i, p)| (i, (p - q).norm_squared())).collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        prop_assert_eq!(got, all);
    }

    #[test]
    fn filter_removes_exactly_the_sparse(seed in any::<u64>(), threshold in 0.001f64..0.2) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(20..600);
        let positions: Vec<Vec3> = (0..n).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let cloud = ColoredPointCloud {
            colors: vec![[0.0; 3]; n],
            layers: vec![1; n],
            normals: None,
            unit_scale: None,
            positions,
        };
        let kept = filter_outliers(&cloud, 8, threshold).unwrap();
        // brute force: sorted distances to every point, self at index 0
        let d: Vec<f64> = cloud
            .positions
            .iter()
            .map(|p| {
                let mut all: Vec<f64> = cloud.positions.iter().map(|q| (p - q).norm()).collect();
                all.sort_by(f64::total_cmp);
                all[8]
            })
            .collect();
        let diag = cloud.diagonal();
        let expect: Vec<Vec3> = cloud.positions.iter().zip(&d).filter(|(_, &d)| d / diag <= threshold).map(|(p, _)| *p).collect();
        prop_assert_eq!(kept.positions, expect);
        prop_assert_eq!(kept.unit_scale, Some(diag));
    }
}
