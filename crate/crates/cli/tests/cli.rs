use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn facefit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facefit")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn small_fixture(dir: &Path, out: &str, seed: &str) {
    fs::write(dir.join("fx.json"), r#"{"grid": 12, "size": 24, "spp": 2, "detail": false}"#).unwrap();
    ok(facefit(dir, &["make-fixture", "--config", "fx.json", "--seed", seed, "--out", out, "--deterministic"]));
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn fixture_is_bit_identical_for_a_seed() {
    let t = tempfile::tempdir().unwrap();
    small_fixture(t.path(), "a", "7");
    small_fixture(t.path(), "b", "7");
    let (a, b) = (manifest(&t.path().join("a")), manifest(&t.path().join("b")));
    assert_eq!(a, b);
    assert!(a.get("elapsed_seconds").is_none());
    for f in ["target.pfm", "landmarks.txt", "truth.json", "truth_mesh.obj"] {
        assert_eq!(fs::read(t.path().join("a").join(f)).unwrap(), fs::read(t.path().join("b").join(f)).unwrap());
    }
    small_fixture(t.path(), "c", "8");
    assert_ne!(fs::read(t.path().join("a/target.pfm")).unwrap(), fs::read(t.path().join("c/target.pfm")).unwrap());
}

#[test]
fn fixture_writes_68_landmarks() {
    let t = tempfile::tempdir().unwrap();
    small_fixture(t.path(), "fx", "1");
    let text = fs::read_to_string(t.path().join("fx/landmarks.txt")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(rows.len(), 68);
    for r in rows {
        let xy: Vec<f64> = r.split_whitespace().map(|s| s.parse().unwrap()).collect();
        assert_eq!(xy.len(), 2);
        assert!(xy.iter().all(|v| (0.0..24.0).contains(v)), "{r}");
    }
    let m = manifest(&t.path().join("fx"));
    assert_eq!(m["command"], "make-fixture");
    assert_eq!(m["seed"], 1);
    let files: Vec<&str> = m["artifacts"].as_array().unwrap().iter().map(|a| a["file"].as_str().unwrap()).collect();
    assert!(files.contains(&"target.pfm") && files.contains(&"bundle/mean_shape.f32"));
}

#[test]
fn short_fit_writes_artifacts() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    small_fixture(d, "fx", "2");
    fs::write(
        d.join("fit.json"),
        r#"{"spp": 1, "stages": [
            {"stage": "coarse", "trainable": ["alpha", "delta", "beta", "rot", "trans", "sh"], "iterations": 4},
            {"stage": "medium", "trainable": ["medium_diffuse", "medium_specular"], "iterations": 2},
            {"stage": "fine", "trainable": ["fine_normal", "fine_diffuse"], "iterations": 2}]}"#,
    )
    .unwrap();
    ok(facefit(
        d,
        &[
            "fit",
            "--config",
            "fit.json",
            "--bundle",
            "fx/bundle",
            "--image",
            "fx/target.pfm",
            "--landmarks",
            "fx/landmarks.txt",
            "--out",
            "fit",
        ],
    ));
    for f in [
        "params.json",
        "diffuse.pfm",
        "specular.pfm",
        "normal.pfm",
        "envmap.pfm",
        "render_coarse.png",
        "render_medium.png",
        "render_fine.png",
        "fit_log.csv",
        "mesh.obj",
        "manifest.json",
    ] {
        assert!(d.join("fit").join(f).is_file(), "{f} missing");
    }
    let log = fs::read_to_string(d.join("fit/fit_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 4 + 2 + 2);
    assert!(manifest(&d.join("fit"))["elapsed_seconds"].as_f64().unwrap() > 0.0);
}

#[test]
fn identical_inputs_give_zero_metrics() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    small_fixture(d, "fx", "3");
    ok(facefit(d, &["metrics", "--pred", "fx/target.pfm", "--gt", "fx/target.pfm", "--out", "img"]));
    let m: Value = serde_json::from_str(&fs::read_to_string(d.join("img/metrics.json")).unwrap()).unwrap();
    assert_eq!(m["rmse"]["mean"], 0.0);
    assert!((m["ssim"]["mean"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    ok(facefit(d, &["metrics", "--pred", "fx/truth_mesh.obj", "--gt", "fx/truth_mesh.obj", "--out", "mesh"]));
    let m: Value = serde_json::from_str(&fs::read_to_string(d.join("mesh/metrics.json")).unwrap()).unwrap();
    assert_eq!(m["vertex_error"]["mean"], 0.0);
}

#[test]
fn render_reproduces_fixture_landmarks() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    small_fixture(d, "fx", "4");
    fs::write(d.join("r.json"), r#"{"size": 24, "analytic": true}"#).unwrap();
    ok(facefit(
        d,
        &["render", "--config", "r.json", "--bundle", "fx/bundle", "--params", "fx/truth.json", "--out", "r"],
    ));
    assert_eq!(
        fs::read_to_string(d.join("fx/landmarks.txt")).unwrap(),
        fs::read_to_string(d.join("r/landmarks.txt")).unwrap()
    );
    assert!(d.join("r/coverage.png").is_file());
}

#[test]
fn gradcheck_passes_on_small_fixture() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    fs::write(d.join("gc.json"), r#"{"fixture": {"grid": 12, "size": 20, "spp": 2}, "coords": 6}"#).unwrap();
    let o = ok(facefit(d, &["gradcheck", "--config", "gc.json", "--out", "gc"]));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 3);
    assert!(d.join("gc/gradcheck.json").is_file());
}

#[test]
fn errors_exit_with_two() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    fs::write(d.join("bad.json"), r#"{"grid": 12, "colour": 3}"#).unwrap();
    let o = facefit(d, &["make-fixture", "--config", "bad.json", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
    let o = facefit(d, &["metrics", "--pred", "missing.pfm", "--gt", "missing.pfm", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}
