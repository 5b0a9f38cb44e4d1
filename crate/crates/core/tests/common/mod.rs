#![allow(dead_code)]

use peelkit::geometry::{Camera, Hit, Projection, Ray, ShearedRay, TriangleMesh, Vec3};
use peelkit::map::Mask;
use peelkit::pointcloud::{fibonacci_sphere, ColoredPointCloud};

pub fn perspective(res: usize) -> Camera {
    Camera::looking_down_z(res, res, Projection::default_perspective()).unwrap()
}

pub fn orthographic(res: usize) -> Camera {
    Camera::looking_down_z(res, res, Projection::default_orthographic()).unwrap()
}

/// Every triangle tested, no acceleration structure.
pub fn brute_hits(mesh: &TriangleMesh, ray: &Ray, merge_eps: f64) -> Vec<Hit> {
    let sheared = ShearedRay::new(ray);
    let mut hits: Vec<Hit> = (0..mesh.triangle_count())
        .filter_map(|t| sheared.intersect(&mesh.corners(t), t as u32))
        .collect();
    peelkit::geometry::merge_coincident(&mut hits, merge_eps);
    hits
}

/// Textbook Möller-Trumbore, used as an independent check on `t`.
pub fn moller_trumbore(ray: &Ray, c: &[Vec3; 3]) -> Option<f64> {
    let d = ray.direction();
    let e1 = c[1] - c[0];
    let e2 = c[2] - c[0];
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let s = ray.origin - c[0];
    let u = s.dot(&p) / det;
    let q = s.cross(&e1);
    let v = d.dot(&q) / det;
    if u < 0.0 || v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) / det;
    (t > ray.t_min).then_some(t)
}

/// Distance between the line `o + s d` and the segment `a`-`b`.
pub fn line_segment_distance(o: Vec3, d: Vec3, a: Vec3, b: Vec3) -> f64 {
    let d = d.normalize();
    let dist = |p: Vec3| {
        let v = p - o;
        (v - d * v.dot(&d)).norm()
    };
    // distance to the line is convex along the segment; golden-section search
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if dist(a + (b - a) * m1) < dist(a + (b - a) * m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    dist(a + (b - a) * (0.5 * (lo + hi)))
}

/// Square-window binary erosion.
pub fn erode(mask: &Mask, r: usize) -> Mask {
    let (w, h) = mask.dims();
    let mut out = mask.clone();
    for y in 0..h {
        for x in 0..w {
            let mut keep = *mask.get(x, y) != 0;
            'win: for yy in y.saturating_sub(r)..=(y + r) {
                for xx in x.saturating_sub(r)..=(x + r) {
                    if xx >= w || yy >= h || *mask.get(xx, yy) == 0 {
                        keep = false;
                        break 'win;
                    }
                }
            }
            out.set(x, y, u8::from(keep));
        }
    }
    out
}

/// Dense unit sphere plus `outliers` points 0.5 off the surface, appended
/// at the end.
pub fn planted_outliers(n: usize, outliers: usize) -> ColoredPointCloud {
    let mut positions = fibonacci_sphere(Vec3::zeros(), 1.0, n);
    positions.extend(fibonacci_sphere(Vec3::zeros(), 1.5, outliers));
    let len = positions.len();
    ColoredPointCloud {
        positions,
        colors: vec![[0.5; 3]; len],
        normals: None,
        layers: vec![1; len],
        unit_scale: None,
    }
}

pub fn iou(a: &Mask, b: &Mask) -> f64 {
    let (mut i, mut u) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        i += usize::from(x != 0 && y != 0);
        u += usize::from(x != 0 || y != 0);
    }
    i as f64 / u.max(1) as f64
}

/// Random peel stack: per pixel, a random number of ascending depths in
/// `[9, 11]`, then zeros.
pub fn random_stack(rng: &mut impl rand::Rng, cam: &Camera, layers: usize) -> peelkit::peel::PeelStack {
    use peelkit::map::Plane;
    let (w, h) = (cam.width(), cam.height());
    let mut planes = vec![vec![0.0f32; w * h]; layers];
    for i in 0..w * h {
        let n = rng.gen_range(0..=layers);
        let mut d: Vec<f32> = (0..n).map(|_| rng.gen_range(9.0f32..11.0)).collect();
        d.sort_by(f32::total_cmp);
        for (l, v) in d.into_iter().enumerate() {
            planes[l][i] = v;
        }
    }
    let depth = planes.into_iter().map(|p| Plane::from_vec(w, h, p)).collect();
    peelkit::peel::PeelStack::from_parts(*cam, peelkit::peel::DepthRange::around_origin(cam), depth, None).unwrap()
}

pub fn random_mask(rng: &mut impl rand::Rng, w: usize, h: usize, p: f64) -> Mask {
    Mask::from_vec(w, h, (0..w * h).map(|_| u8::from(rng.gen_bool(p))).collect())
}

pub fn peelkit(args: &[&str], dir: &std::path::Path, threads: Option<usize>) -> std::process::Output {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_peelkit"));
    cmd.args(args).current_dir(dir);
    match threads {
        Some(n) => cmd.env("PEELKIT_THREADS", n.to_string()),
        None => cmd.env_remove("PEELKIT_THREADS"),
    };
    cmd.output().expect("spawn peelkit")
}

pub fn peelkit_ok(args: &[&str], dir: &std::path::Path, threads: Option<usize>) -> std::process::Output {
    let out = peelkit(args, dir, threads);
    assert!(
        out.status.success(),
        "peelkit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Runs every subcommand on the skirt scene in `dir`; returns each
/// artifact's relative path and bytes, sorted.
pub fn run_pipeline(dir: &std::path::Path, threads: Option<usize>) -> Vec<(String, Vec<u8>)> {
    let res: [&'static str; 2] = ["--resolution", "128"];
    let run = |args: &[&str]| peelkit_ok(args, dir, threads);
    let with = |a: &[&'static str]| -> Vec<&'static str> { [a, &res[..]].concat() };
    run(&with(&["synth", "skirt", "--seed", "1", "-o", "scene"]));
    run(&with(&["render", "scene/mesh.obj", "-o", "gt.peel"]));
    run(&with(&[
        "prior", "--model", "scene/model.lbsm", "--params", "scene/params.json", "-o", "prior.peel",
        "--foreground", "scene/foreground.png", "--gamma", "gamma.peel",
    ]));
    run(&["decompose", "--gt", "gt.peel", "--prior", "prior.peel", "--foreground", "scene/foreground.png", "--out-dir", "dec"]);
    run(&[
        "fuse", "--prior", "prior.peel", "--rd", "dec/rd.peel", "--conflict", "dec/conflict.peel", "--aux",
        "dec/aux.peel", "--foreground", "scene/foreground.png", "-o", "fused.peel", "--clamp", "-1,0.5",
    ]);
    run(&["backproject", "--depth", "gt.peel", "-o", "cloud.ply", "--normals"]);
    run(&["filter", "cloud.ply", "-o", "filtered.ply"]);
    run(&with(&[
        "eval", "--pred", "cloud.ply", "--gt-mesh", "scene/mesh.obj", "--samples", "20000", "--prior", "prior.peel",
        "--pred-rd", "dec/rd.peel", "--gt-rd", "dec/rd.peel", "--gt-conflict", "dec/conflict.peel", "--pred-fused",
        "fused.peel", "--gt-fused", "gt.peel", "--foreground", "scene/foreground.png", "-o", "eval.json",
    ]));
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}
