//! Vertex-based renderer: depth rasterization, vertex visibility, the
//! per-vertex photo-consistency loss, the landmark loss and the uv-space
//! projection of the input image.

use std::path::Path;

use rayon::prelude::*;

use crate::bvh::Bvh;
use crate::diff::{sum, Ctx, Emitted, Real, SubTape, Tape, Var, NONE};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::V3;
use crate::model::{perspective, to_camera, Camera, ModelBundle, UvMap, LANDMARK_COUNT};
use crate::render::{analytic_radiance, camera, conv_light, input3, input_v3, material, SurfaceQuery};
use crate::scene::SceneVars;

/// Nearest camera-space depth per pixel; `f64::INFINITY` and [`NONE`] mark
/// uncovered pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthBuffer {
    pub width: usize,
    pub height: usize,
    pub z: Vec<f64>,
    pub tri: Vec<u32>,
}

impl DepthBuffer {
    pub fn covered(&self, x: usize, y: usize) -> bool {
        self.tri[y * self.width + x] != NONE
    }
}

/// Plain camera of a scene.
pub fn scene_camera(scene: &SceneVars) -> Camera {
    Camera { r: scene.rmat_f64(), t: scene.camera_center(), intr: scene.intr }
}

/// Rasterize both faces of every triangle in front of the camera, sampling
/// at pixel centers with perspective-correct depth. Triangles are visited in
/// index order and only a strictly nearer depth replaces a stored one.
pub fn rasterize(cam: &Camera, verts: &[[f64; 3]], tris: &[[u32; 3]]) -> DepthBuffer {
    let (w, h) = (cam.intr.width, cam.intr.height);
    let mut db = DepthBuffer { width: w, height: h, z: vec![f64::INFINITY; w * h], tri: vec![NONE; w * h] };
    let cams: Vec<V3<f64>> = verts.iter().map(|&v| cam.to_camera(v)).collect();
    for (ti, t) in tris.iter().enumerate() {
        let pc = t.map(|i| cams[i as usize]);
        if pc.iter().any(|p| !(p.z > 0.0)) {
            continue;
        }
        let s = pc.map(|p| perspective(p, &cam.intr));
        let area = (s[1].0 - s[0].0) * (s[2].1 - s[0].1) - (s[2].0 - s[0].0) * (s[1].1 - s[0].1);
        if area == 0.0 {
            continue;
        }
        let lo_x = s.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi_x = s.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let lo_y = s.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let hi_y = s.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let x0 = (lo_x - 0.5).ceil().max(0.0) as usize;
        let y0 = (lo_y - 0.5).ceil().max(0.0) as usize;
        let x1 = ((hi_x - 0.5).floor() + 1.0).clamp(0.0, w as f64) as usize;
        let y1 = ((hi_y - 0.5).floor() + 1.0).clamp(0.0, h as f64) as usize;
        for y in y0..y1 {
            for x in x0..x1 {
                let (qx, qy) = (x as f64 + 0.5, y as f64 + 0.5);
                let edge = |a: (f64, f64), b: (f64, f64)| (b.0 - a.0) * (qy - a.1) - (qx - a.0) * (b.1 - a.1);
                let l0 = edge(s[1], s[2]) / area;
                let l1 = edge(s[2], s[0]) / area;
                let l2 = edge(s[0], s[1]) / area;
                if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                    continue;
                }
                let z = 1.0 / (l0 / pc[0].z + l1 / pc[1].z + l2 / pc[2].z);
                let k = y * w + x;
                if z < db.z[k] {
                    db.z[k] = z;
                    db.tri[k] = ti as u32;
                }
            }
        }
    }
    db
}

pub fn rasterize_depth(scene: &SceneVars, bundle: &ModelBundle) -> DepthBuffer {
    rasterize(&scene_camera(scene), &scene.verts_f64, &bundle.triangles)
}

/// Vertices that face the camera, project inside the image and are the
/// nearest surface along their own camera ray (within `1e-3 · scale`).
pub fn vertex_visibility(scene: &SceneVars, bvh: &Bvh) -> Vec<bool> {
    let cam = scene_camera(scene);
    let eye = cam.t;
    let tol = 1e-3 * scene.scale;
    scene
        .verts_f64
        .par_iter()
        .zip(&scene.normals_f64)
        .map(|(&v, &n)| {
            let p = V3::from_array(v);
            let to_eye = eye - p;
            if V3::from_array(n).dot(to_eye) <= 0.0 {
                return false;
            }
            let Ok([px, py]) = cam.project(v) else {
                return false;
            };
            if !(0.0..=cam.intr.width as f64).contains(&px) || !(0.0..=cam.intr.height as f64).contains(&py) {
                return false;
            }
            let d = p - eye;
            let len = d.norm();
            match bvh.closest_hit(eye.to_array(), d.to_array(), 0.0, f64::INFINITY) {
                Some(hit) => hit.t >= 1.0 - tol / len,
                None => true,
            }
        })
        .collect()
}

fn visibility_key(vis: &[bool]) -> u64 {
    vis.iter()
        .enumerate()
        .filter(|(_, &v)| v)
        .fold(0xcbf2_9ce4_8422_2325u64, |h, (i, _)| (h ^ i as u64).wrapping_mul(0x100_0000_01b3))
}

/// `Σ_c |max(0, B_c) − I_c(Π(C(v)))|` for one vertex.
fn vertex_term<C: Ctx>(ctx: &C, scene: &SceneVars, bundle: &ModelBundle, image: &Image, i: usize) -> C::S {
    let (r, t) = camera(ctx, scene);
    let v = input_v3(ctx, &scene.verts[i]);
    let n = input_v3(ctx, &scene.normals[i]);
    let (px, py) = perspective(to_camera(&r, t, v), &scene.intr);
    let uv = bundle.uv[i];
    let q = SurfaceQuery {
        normal: n,
        uv: [ctx.constant(uv[0]), ctx.constant(uv[1])],
        tangent: V3::from_array(scene.tangents[i]),
        bitangent: V3::from_array(scene.bitangents[i]),
    };
    let m = material(ctx, scene, &q, || (input3(ctx, &scene.vert_diffuse[i]), input3(ctx, &scene.vert_specular[i])));
    let light = conv_light(ctx, scene);
    let b = analytic_radiance(&light, &m, v, t);
    let target = image.sample(px, py);
    let d = [0, 1, 2].map(|c| (b[c].relu() - target[c]).abs());
    d[0] + d[1] + d[2]
}

/// Per-vertex photo-consistency `E_ph^R`, summed over visible vertices.
pub fn vertex_photo_loss<'t>(
    tape: &'t Tape,
    scene: &SceneVars,
    bundle: &ModelBundle,
    image: &Image,
    bvh: &Bvh,
) -> Result<Var<'t>> {
    if image.width != scene.intr.width || image.height != scene.intr.height {
        return Err(Error::ImageSize {
            module: "raster",
            expected: (scene.intr.width, scene.intr.height),
            found: (image.width, image.height),
        });
    }
    let vis = vertex_visibility(scene, bvh);
    tape.note_branch(visibility_key(&vis));
    let ids: Vec<usize> = (0..vis.len()).filter(|&i| vis[i]).collect();
    if ids.is_empty() {
        return Err(Error::NoVisibleVertices);
    }
    let recording = tape.is_recording();
    let terms: Vec<Result<(Emitted, u64)>> = ids
        .par_iter()
        .map_init(
            || SubTape::new(recording),
            |st, &i| {
                st.clear();
                let out = vertex_term(&&*st, scene, bundle, image, i);
                st.check_finite()?;
                let em = st.emit(&[out]).pop().expect("one output");
                Ok((em, st.signature()))
            },
        )
        .collect();
    let mut vars = Vec::with_capacity(terms.len());
    for t in terms {
        let (em, sig) = t?;
        tape.note_branch(sig);
        vars.push(tape.push_emitted(&em));
    }
    let total = sum(tape.constant(0.0), &vars);
    tape.check_finite()?;
    Ok(total)
}

/// Mean squared pixel distance between detected landmarks and the projected
/// landmark vertices.
pub fn landmark_loss<'t>(
    tape: &'t Tape,
    scene: &SceneVars,
    bundle: &ModelBundle,
    landmarks: &[[f64; 2]],
) -> Result<Var<'t>> {
    if landmarks.len() != LANDMARK_COUNT {
        return Err(Error::LandmarkCount(landmarks.len()));
    }
    let (r, t) = camera(&tape, scene);
    let terms: Vec<Var<'t>> = bundle
        .landmark_vertex_ids
        .iter()
        .zip(landmarks)
        .map(|(&id, l)| {
            let v = scene.vertex(tape, id as usize);
            let (px, py) = perspective(to_camera(&r, t, v), &scene.intr);
            (px - l[0]).square() + (py - l[1]).square()
        })
        .collect();
    Ok(sum(tape.constant(0.0), &terms) / LANDMARK_COUNT as f64)
}

/// Plain projections of the landmark vertices.
pub fn project_landmarks(scene: &SceneVars, bundle: &ModelBundle) -> Result<Vec<[f64; 2]>> {
    let cam = scene_camera(scene);
    bundle.landmark_vertex_ids.iter().map(|&id| cam.project(scene.verts_f64[id as usize])).collect()
}

/// Landmarks as text, one `x y` pixel pair per line.
pub fn write_landmarks(path: &Path, lm: &[[f64; 2]]) -> Result<()> {
    let text: String = lm.iter().map(|p| format!("{} {}\n", p[0], p[1])).collect();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read a landmark file written by [`write_landmarks`]; blank lines and
/// lines starting with `#` are skipped. Exactly 68 rows are required.
pub fn read_landmarks(path: &Path) -> Result<Vec<[f64; 2]>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
        if v.len() != 2 || !v.iter().all(|x| x.is_finite()) {
            return Err(Error::format(path, format!("line {}: expected two finite numbers", n + 1)));
        }
        out.push([v[0], v[1]]);
    }
    if out.len() != LANDMARK_COUNT {
        return Err(Error::LandmarkCount(out.len()));
    }
    Ok(out)
}

/// The input image resampled into uv space plus the per-texel validity mask.
///
/// A texel is valid when it maps onto the surface, its surface point faces
/// the camera, projects inside the image and is not occluded.
pub fn project_to_uv(image: &Image, scene: &SceneVars, bundle: &ModelBundle, bvh: &Bvh) -> (UvMap, Vec<bool>) {
    let res = bundle.texture_resolution;
    let cam = scene_camera(scene);
    let eye = cam.t;
    let tol = 1e-3 * scene.scale;
    let texels: Vec<([f64; 3], bool)> = (0..res * res)
        .into_par_iter()
        .map(|t| {
            let Some((tri, bary)) = bundle.texel_hit(t) else {
                return ([0.0; 3], false);
            };
            let ids = bundle.triangles[tri as usize].map(|i| i as usize);
            let mix = |a: &[[f64; 3]]| {
                V3::from_array(a[ids[0]]).scale(bary[0])
                    + V3::from_array(a[ids[1]]).scale(bary[1])
                    + V3::from_array(a[ids[2]]).scale(bary[2])
            };
            let p = mix(&scene.verts_f64);
            let n = mix(&scene.normals_f64);
            if n.dot(eye - p) <= 0.0 {
                return ([0.0; 3], false);
            }
            let Ok([px, py]) = cam.project(p.to_array()) else {
                return ([0.0; 3], false);
            };
            if !(0.0..=image.width as f64).contains(&px) || !(0.0..=image.height as f64).contains(&py) {
                return ([0.0; 3], false);
            }
            let d = p - eye;
            let visible = match bvh.closest_hit(eye.to_array(), d.to_array(), 0.0, f64::INFINITY) {
                Some(hit) => hit.t >= 1.0 - tol / d.norm(),
                None => true,
            };
            if !visible {
                return ([0.0; 3], false);
            }
            (image.sample(px, py), true)
        })
        .collect();
    let (data, mask) = texels.into_iter().unzip();
    (UvMap { res, data }, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Intrinsics;

    fn cam() -> Camera {
        Camera::new([0.0; 3], [0.0, 0.0, -10.0], Intrinsics::square(16))
    }

    #[test]
    fn single_triangle_depth() {
        // about ten pixels across at focal length 48
        let v = [[-1.0, -1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 1.0, 0.0]];
        let db = rasterize(&cam(), &v, &[[0, 1, 2]]);
        assert!(db.covered(8, 8));
        assert!((db.z[8 * 16 + 8] - 10.0).abs() < 1e-12);
        assert!(!db.covered(0, 0));
    }

    #[test]
    fn nearer_triangle_wins() {
        let v = [
            [-5.0, -5.0, 0.0],
            [5.0, -5.0, 0.0],
            [0.0, 5.0, 0.0],
            [-5.0, -5.0, -2.0],
            [5.0, -5.0, -2.0],
            [0.0, 5.0, -2.0],
        ];
        let db = rasterize(&cam(), &v, &[[0, 1, 2], [3, 4, 5]]);
        assert_eq!(db.tri[8 * 16 + 8], 1);
        assert!((db.z[8 * 16 + 8] - 8.0).abs() < 1e-12);
        let db = rasterize(&cam(), &v, &[[3, 4, 5], [0, 1, 2]]);
        assert_eq!(db.tri[8 * 16 + 8], 0);
    }
}
