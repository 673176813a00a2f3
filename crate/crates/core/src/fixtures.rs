//! Synthetic scenes rendered from known parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bvh::Bvh;
use crate::diff::Tape;
use crate::error::Result;
use crate::image::Image;
use crate::math::{axis_angle_to_matrix, V3};
use crate::model::synthetic::{blocker_bundle, synthetic_bundle};
use crate::model::{Intrinsics, ModelBundle, SceneParams};
use crate::raster::project_landmarks;
use crate::scene::{BuildOptions, SceneVars, Stage};
use crate::sh::{index, SHLight};
use crate::trace::{render, Estimator, RenderOutput, TraceOptions};

/// Distance of the canonical camera from the model origin.
pub const CAMERA_DISTANCE: f64 = 600.0;
pub const ROUGHNESS: f64 = 0.35;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureOptions {
    pub grid: usize,
    pub size: usize,
    pub spp: usize,
    pub seed: u64,
    /// Texture increments and a detail normal map in the ground truth.
    pub detail: bool,
    /// Scale of the sampled shape and reflectance coefficients, in prior
    /// standard deviations.
    pub coeff_scale: f64,
    /// Standard deviation of the camera rotation, radians.
    pub rot_sigma: f64,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        FixtureOptions { grid: 48, size: 128, spp: 8, seed: 1, detail: true, coeff_scale: 0.7, rot_sigma: 0.06 }
    }
}

/// A target image with everything that produced it.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub bundle: ModelBundle,
    pub truth: SceneParams,
    pub intr: Intrinsics,
    pub stage: Stage,
    pub trace: TraceOptions,
    pub image: Image,
    pub landmarks: Vec<[f64; 2]>,
    /// Ground-truth render with hit records.
    pub render: RenderOutput,
}

/// Soft light: a bright key from the upper left on the camera side over
/// an ambient term, plus a little second-band structure.
pub fn default_light() -> SHLight {
    let mut l = SHLight::linear([0.8, 0.76, 0.72], [-0.3, -0.35, -0.45]);
    for c in 0..3 {
        l.coeffs[c][index(2, 0)] = -0.08;
        l.coeffs[c][index(2, 2)] = 0.05;
    }
    l
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Smooth tangent-space detail normals.
pub fn detail_normals(res: usize) -> Vec<[f64; 3]> {
    let tau = 2.0 * std::f64::consts::PI;
    (0..res * res)
        .map(|t| {
            let u = ((t % res) as f64 + 0.5) / res as f64;
            let v = ((t / res) as f64 + 0.5) / res as f64;
            let x = 0.15 * (tau * 4.0 * u).sin() * (tau * 1.5 * v).cos();
            let y = 0.15 * (tau * 3.0 * v).sin();
            let n = (x * x + y * y + 1.0).sqrt();
            [x / n, y / n, 1.0 / n]
        })
        .collect()
}

fn blob_map(res: usize, blobs: &[(f64, f64, f64, [f64; 3])]) -> Vec<[f64; 3]> {
    (0..res * res)
        .map(|t| {
            let u = ((t % res) as f64 + 0.5) / res as f64;
            let v = ((t / res) as f64 + 0.5) / res as f64;
            let mut out = [0.0; 3];
            for &(cu, cv, s, a) in blobs {
                let g = (-((u - cu).powi(2) + (v - cv).powi(2)) / (2.0 * s * s)).exp();
                for c in 0..3 {
                    out[c] += a[c] * g;
                }
            }
            out
        })
        .collect()
}

/// Ground-truth parameters drawn around the model mean.
pub fn sample_truth(bundle: &ModelBundle, opts: &FixtureOptions, rng: &mut ChaCha8Rng) -> SceneParams {
    let mut p = SceneParams::neutral(bundle, [0.0, 0.0, -CAMERA_DISTANCE], default_light(), ROUGHNESS);
    for (a, v) in p.alpha.iter_mut().zip(&bundle.prior_var_shape) {
        *a = opts.coeff_scale * v.sqrt() * normal(rng);
    }
    for (b, v) in p.beta.iter_mut().zip(&bundle.prior_var_refl) {
        *b = opts.coeff_scale * v.sqrt() * normal(rng);
    }
    for d in &mut p.delta {
        *d = rng.gen_range(0.0..0.4);
    }
    for r in &mut p.rot {
        *r = opts.rot_sigma * normal(rng);
    }
    // model origin near the optical axis, T = −R u
    let u = V3::new(4.0 * normal(rng), 4.0 * normal(rng), CAMERA_DISTANCE + 15.0 * normal(rng));
    p.trans = axis_angle_to_matrix(V3::from_array(p.rot)).mul_vec(u).scale_f(-1.0).to_array();
    if opts.detail {
        let res = bundle.texture_resolution;
        let mut blobs = Vec::new();
        for _ in 0..6 {
            let (cu, cv) = (rng.gen_range(0.25..0.75), rng.gen_range(0.25..0.85));
            let a = rng.gen_range(-0.05..0.05);
            blobs.push((cu, cv, 0.05, [a, 0.8 * a, 0.6 * a]));
            blobs.push((1.0 - cu, cv, 0.05, [a, 0.8 * a, 0.6 * a]));
        }
        p.medium_diffuse_inc = blob_map(res, &blobs);
        p.medium_specular_inc = blob_map(res, &[(0.5, 0.5, 0.12, [0.04; 3])]);
        p.fine_diffuse_inc = blob_map(res, &[(0.4, 0.6, 0.02, [-0.03; 3]), (0.6, 0.6, 0.02, [-0.03; 3])]);
        p.fine_normal = detail_normals(res);
    }
    p
}

/// Plain render of `params` at `stage`.
pub fn render_params(
    bundle: &ModelBundle,
    params: &SceneParams,
    intr: Intrinsics,
    stage: Stage,
    opts: &TraceOptions,
) -> Result<(RenderOutput, Vec<[f64; 2]>)> {
    let tape = Tape::passive();
    let build = BuildOptions { stage, env: opts.estimator == Estimator::MonteCarlo };
    let (scene, _) = SceneVars::build(&tape, bundle, params, intr, &[], build)?;
    let bvh = Bvh::build(&scene.verts_f64, &bundle.triangles);
    let out = render(&scene, bundle, &bvh, opts)?;
    let lm = project_landmarks(&scene, bundle)?;
    Ok((out, lm))
}

/// Face-like fixture rendered from sampled ground truth.
pub fn face_fixture(opts: &FixtureOptions) -> Result<Fixture> {
    let bundle = synthetic_bundle(opts.grid);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let truth = sample_truth(&bundle, opts, &mut rng);
    let stage = if opts.detail { Stage::Fine } else { Stage::Coarse };
    fixture_from(bundle, truth, opts.size, stage, TraceOptions::new(opts.spp, opts.seed))
}

/// Render `truth` into a fixture.
pub fn fixture_from(
    bundle: ModelBundle,
    truth: SceneParams,
    size: usize,
    stage: Stage,
    trace: TraceOptions,
) -> Result<Fixture> {
    let intr = Intrinsics::square(size);
    let (render, landmarks) = render_params(&bundle, &truth, intr, stage, &trace)?;
    Ok(Fixture { bundle, truth, intr, stage, trace, image: render.image.clone(), landmarks, render })
}

/// Floor with a wall lit from the wall's side, so the wall casts a shadow
/// band onto the floor.
pub fn blocker_fixture(size: usize, spp: usize, seed: u64) -> Result<Fixture> {
    let bundle = blocker_bundle(24, 60.0, 10.0, 40.0);
    let light = SHLight::linear([0.7; 3], [0.9, 0.0, -0.3]);
    let truth = SceneParams::neutral(&bundle, [0.0, 0.0, -CAMERA_DISTANCE], light, ROUGHNESS);
    fixture_from(bundle, truth, size, Stage::Coarse, TraceOptions::new(spp, seed))
}

/// A generic evaluation point near the fixture's truth for gradient checks.
///
/// Coefficients and pose are moved off the truth, every map texel gets a
/// random jitter so no L1 term sits at its kink, and the target is made
/// uniformly brighter than any render near the point so photometric
/// residuals keep one sign.
pub fn gradcheck_point(fx: &Fixture, seed: u64) -> (SceneParams, Image) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = fx.truth.clone();
    for a in &mut p.alpha {
        *a *= 0.8;
    }
    for b in &mut p.beta {
        *b += 0.1 * normal(&mut rng);
    }
    p.rot[1] += 0.01;
    p.trans[0] += 1.0;
    p.trans[2] += 2.0;
    let mut jitter = |m: &mut Vec<[f64; 3]>, a: f64| {
        for t in m.iter_mut() {
            for c in t.iter_mut() {
                *c += rng.gen_range(-a..a);
            }
        }
    };
    jitter(&mut p.medium_diffuse_inc, 0.02);
    jitter(&mut p.medium_specular_inc, 0.02);
    jitter(&mut p.fine_diffuse_inc, 0.02);
    jitter(&mut p.fine_normal, 0.05);
    p.project_normals();
    let mut target = fx.image.clone();
    for px in &mut target.data {
        for c in px.iter_mut() {
            *c += 0.25;
        }
    }
    (p, target)
}
