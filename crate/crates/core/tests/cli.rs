mod common;

use common::{peelkit, peelkit_ok, run_pipeline};
use peelkit::fusion::{load_foreground, AuxiliaryStack, ResidualStack};
use peelkit::geometry::{shapes, Bvh, Vec3};
use peelkit::peel::{render_prior_peel, PeelFile, PeelStack};
use std::path::Path;

fn stack(dir: &Path, name: &str) -> PeelStack {
    PeelStack::load(&dir.join(name)).unwrap()
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = peelkit(&["render", "no/such/mesh.obj", "-o", "x.peel"], dir.path(), None);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no/such/mesh.obj"));
    assert!(!dir.path().join("x.peel").exists());
}

#[test]
fn render_cube_center_and_layer_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    peelkit::geometry::obj::write_obj(&shapes::cube(Vec3::zeros(), 1.0), &d.join("cube.obj")).unwrap();
    let ortho = ["--camera", "orthographic", "--resolution", "65"];
    peelkit_ok(&[&["render", "cube.obj", "-o", "c4.peel"], &ortho[..]].concat(), d, None);
    let s = stack(d, "c4.peel");
    let center: Vec<f32> = (0..4).map(|l| *s.depth(l).get(32, 32)).collect();
    assert_eq!(center, vec![9.5, 10.5, 0.0, 0.0]);
    for l in 1..=4 {
        assert!(d.join(format!("c4_layer{l}.png")).exists());
    }

    peelkit_ok(&[&["render", "cube.obj", "-o", "c6.peel", "--layers", "6", "--no-preview"], &ortho[..]].concat(), d, None);
    let bytes = std::fs::read(d.join("c6.peel")).unwrap();
    assert_eq!(&bytes[..4], b"PEEL");
    assert_eq!(bytes[18], 6, "layer byte");
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("c6.peel.json")).unwrap()).unwrap();
    assert_eq!(manifest["layers"], 6);
    assert!(!d.join("c6_layer1.png").exists());

    for bad in ["0", "17"] {
        assert!(!peelkit(&["render", "cube.obj", "-o", "bad.peel", "--layers", bad], d, None).status.success());
    }
}

#[test]
fn prior_matches_direct_render_and_rejects_bad_scale() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    peelkit_ok(&["synth", "toy-body", "-o", "toy", "--resolution", "96"], d, None);
    let model = peelkit::body::load_lbsm(&d.join("toy/model.lbsm")).unwrap();
    let zeros = peelkit::body::BodyParams::zeros(&model);
    std::fs::write(d.join("zero.json"), serde_json::to_string(&zeros).unwrap()).unwrap();
    peelkit_ok(
        &["prior", "--model", "toy/model.lbsm", "--params", "zero.json", "-o", "p.peel", "--resolution", "96",
          "--foreground", "toy/foreground.png", "--gamma", "g.peel"],
        d,
        None,
    );
    let prior = stack(d, "p.peel");
    let mesh = model.template_mesh().unwrap();
    let direct = render_prior_peel(&mesh, &Bvh::build(&mesh).unwrap(), prior.camera(), 4).unwrap();
    assert_eq!(prior.depths(), direct.depths());

    let f = load_foreground(&d.join("toy/foreground.png")).unwrap();
    let gamma = PeelFile::load(&d.join("g.peel")).unwrap();
    for l in 0..4 {
        let support = prior.support(l);
        for i in 0..96 * 96 {
            let expect = support.is_set(i) && f.is_set(i);
            assert_eq!(gamma.plane(l, 0).data()[i] != 0.0, expect);
        }
    }

    for s in ["0", "-2"] {
        let mut p = zeros.clone();
        p.camera.s = s.parse().unwrap();
        std::fs::write(d.join("bad.json"), serde_json::to_string(&p).unwrap()).unwrap();
        let out = peelkit(&["prior", "--model", "toy/model.lbsm", "--params", "bad.json", "-o", "b.peel"], d, None);
        assert!(!out.status.success());
        assert!(String::from_utf8_lossy(&out.stderr).contains("scale"), "{}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn pipeline_round_trips_and_skirt_is_auxiliary_dominant() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_pipeline(d, None);
    let gt = stack(d, "gt.peel");
    let fused = stack(d, "fused.peel");
    let f = load_foreground(&d.join("scene/foreground.png")).unwrap();
    for l in 0..4 {
        for i in 0..128 * 128 {
            let expect = if f.is_set(i) { gt.depth(l).data()[i] } else { 0.0 };
            assert_eq!(fused.depth(l).data()[i].to_bits(), expect.to_bits());
        }
    }

    // lower half of the image: skirt pixels without prior vs pixels with it
    let gamma = PeelFile::load(&d.join("dec/gamma.peel")).unwrap();
    let aux = AuxiliaryStack::from_file(PeelFile::load(&d.join("dec/aux.peel")).unwrap()).unwrap();
    let rd = ResidualStack::from_files(
        PeelFile::load(&d.join("dec/rd.peel")).unwrap(),
        Some(PeelFile::load(&d.join("dec/conflict.peel")).unwrap()),
    )
    .unwrap();
    assert_eq!(rd.layers(), 4);
    let (mut aux_px, mut gamma_px) = (0, 0);
    for y in 64..128 {
        for x in 0..128 {
            let i = y * 128 + x;
            if !f.is_set(i) {
                continue;
            }
            if gamma.plane(0, 0).data()[i] != 0.0 {
                gamma_px += 1;
            } else {
                assert!(aux.depth(0).data()[i] > 0.0);
                aux_px += 1;
            }
        }
    }
    assert!(aux_px > gamma_px, "auxiliary {aux_px} vs residual {gamma_px}");

    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("eval.json")).unwrap()).unwrap();
    let conv = &report["metrics"]["conventions"];
    for key in ["chamfer_distance", "chamfer_reduction", "p2s", "normal_support", "surface_samples", "seed"] {
        assert!(!conv[key].is_null(), "missing {key}");
    }
    assert_eq!(conv["surface_samples"], 20000);
    let losses = &report["losses"];
    assert_eq!(losses["report"]["l_rd"], 0.0);
    assert_eq!(losses["weights"]["rgb"], 0.1);
    assert!(losses["conventions"]["support"].is_string());
    assert!(losses["conventions"]["reduction"].is_string());
}

#[test]
fn self_eval_is_below_round_trip_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    peelkit_ok(&["synth", "sphere", "-o", "s", "--resolution", "256"], d, None);
    peelkit_ok(&["render", "s/mesh.obj", "-o", "s.peel", "--resolution", "256", "--no-preview"], d, None);
    let out = peelkit_ok(&["eval", "--pred", "s.peel", "--gt-mesh", "s/mesh.obj", "--resolution", "256"], d, None);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let m = &report["metrics"];
    let w = stack(d, "s.peel").camera().pixel_footprint(10.0);
    let (cd, p2s) = (m["chamfer_mean"].as_f64().unwrap(), m["p2s"].as_f64().unwrap());
    assert!(p2s < 2.0 * w, "p2s {p2s} vs {}", 2.0 * w);
    assert!(cd < (2.0 * w).powi(2), "cd {cd} vs {}", (2.0 * w).powi(2));
}

#[test]
fn synth_rejects_unknown_scene() {
    let dir = tempfile::tempdir().unwrap();
    let out = peelkit(&["synth", "teapot", "-o", "t"], dir.path(), None);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    for s in peelkit::synth::SCENES {
        assert!(err.contains(s), "{err}");
    }
}

#[test]
fn synth_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        peelkit_ok(&["synth", "toy-body", "--seed", "5", "-o", "x", "--resolution", "64"], d, None);
    }
    for f in ["mesh.obj", "foreground.png", "model.lbsm", "params.json"] {
        assert_eq!(
            std::fs::read(a.path().join("x").join(f)).unwrap(),
            std::fs::read(b.path().join("x").join(f)).unwrap(),
            "{f}"
        );
    }
}
