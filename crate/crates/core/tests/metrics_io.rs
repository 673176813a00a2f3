use proptest::prelude::*;

use facefit::image::Image;
use facefit::metrics::{normal_angular_error, photometric_rmse, ssim, ssim_gray, vertex_position_error};
use facefit::raster::{read_landmarks, write_landmarks};
use facefit::sh::{bspline_weights, env_direction, EnvMap};
use facefit::Error;

fn rot(axis: [f64; 3], angle: f64) -> impl Fn([f64; 3]) -> [f64; 3] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let k = axis.map(|c| c / n);
    let (s, c) = angle.sin_cos();
    move |v| {
        let kv = k[0] * v[0] + k[1] * v[1] + k[2] * v[2];
        let x = [k[1] * v[2] - k[2] * v[1], k[2] * v[0] - k[0] * v[2], k[0] * v[1] - k[1] * v[0]];
        std::array::from_fn(|i| v[i] * c + x[i] * s + k[i] * kv * (1.0 - c))
    }
}

fn vec3() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-1.0f64..1.0).prop_filter("non-zero", |v| v.iter().map(|c| c * c).sum::<f64>() > 1e-2)
}

proptest! {
    #[test]
    fn angular_error_is_rotation_invariant(
        pairs in prop::collection::vec((vec3(), vec3()), 1..30),
        axis in vec3(),
        angle in -3.0f64..3.0,
    ) {
        let r = rot(axis, angle);
        let (a, b): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let mask = vec![true; a.len()];
        let e0 = normal_angular_error(&a, &b, &mask).unwrap();
        let ra: Vec<_> = a.iter().map(|&v| r(v)).collect();
        let rb: Vec<_> = b.iter().map(|&v| r(v)).collect();
        let e1 = normal_angular_error(&ra, &rb, &mask).unwrap();
        prop_assert!((e0.mean - e1.mean).abs() < 1e-6);
        prop_assert!(e0.mean >= 0.0 && e0.mean <= 180.0);
    }

    #[test]
    fn vertex_error_of_a_translation(t in vec3(), pts in prop::collection::vec(vec3(), 1..20)) {
        let moved: Vec<_> = pts.iter().map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]]).collect();
        let r = vertex_position_error(&moved, &pts, None).unwrap();
        let len = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt();
        prop_assert!((r.mean - len).abs() < 1e-12 && r.std < 1e-9);
    }

    #[test]
    fn ssim_is_symmetric_and_bounded(
        x in prop::collection::vec(0.0f64..1.0, 100),
        y in prop::collection::vec(0.0f64..1.0, 100),
    ) {
        let a = ssim_gray(&x, &y, 10, 10).unwrap();
        let b = ssim_gray(&y, &x, 10, 10).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&a));
        prop_assert!((ssim_gray(&x, &x, 10, 10).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn landmark_file_roundtrip(lm in prop::collection::vec(prop::array::uniform2(-1e3f64..1e3), 68)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lm.txt");
        write_landmarks(&p, &lm).unwrap();
        prop_assert_eq!(read_landmarks(&p).unwrap(), lm);
    }

    #[test]
    fn bspline_weights_partition_unity(t in 0.0f64..1.0) {
        let (w, dw) = bspline_weights(t);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        prop_assert!(dw.iter().sum::<f64>().abs() < 1e-14);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
    }
}

#[test]
fn landmark_reader_accepts_commas_and_comments() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("lm.csv");
    let mut text = String::from("# x, y\n\n");
    for k in 0..68 {
        text.push_str(&format!("{k}.5, {}\n", -k));
    }
    std::fs::write(&p, text).unwrap();
    let lm = read_landmarks(&p).unwrap();
    assert_eq!(lm[3], [3.5, -3.0]);
    std::fs::write(&p, "1 2\n3 4\n").unwrap();
    assert!(matches!(read_landmarks(&p), Err(Error::LandmarkCount(2))));
    std::fs::write(&p, "1 x\n").unwrap();
    assert!(matches!(read_landmarks(&p), Err(Error::Format { .. })));
}

#[test]
fn rmse_and_ssim_of_a_constant_offset() {
    let a = Image::filled(16, 16, [0.2, 0.4, 0.6]);
    let b = Image::filled(16, 16, [0.3, 0.5, 0.7]);
    assert!((photometric_rmse(&a, &b, None).unwrap() - 0.1).abs() < 1e-12);
    let mask: Vec<bool> = (0..256).map(|k| k % 2 == 0).collect();
    assert!((photometric_rmse(&a, &b, Some(&mask)).unwrap() - 0.1).abs() < 1e-12);
    assert!(matches!(photometric_rmse(&a, &b, Some(&[false; 256])), Err(Error::EmptyMask)));
    assert!(ssim(&a, &b).unwrap() < 1.0);
    assert!(ssim(&a, &Image::new(8, 8)).is_err());
}

#[test]
fn envmap_lookup_of_a_constant_is_constant() {
    let env = EnvMap { data: vec![[0.7, 0.2, 0.1]; EnvMap::SIZE * EnvMap::SIZE] };
    for (t, p) in [(0.0, 0.0), (0.3, 1.0), (1.5, -2.0), (3.1, 6.0), (std::f64::consts::PI, 0.4)] {
        let v = env.lookup(env_direction(t, p));
        for c in 0..3 {
            assert!((v[c] - [0.7, 0.2, 0.1][c]).abs() < 1e-12, "{v:?}");
        }
    }
}
