//! Monte-Carlo direct-illumination ray tracer over the environment map, with
//! BVH shadow rays, and the pixel photo-consistency loss `E_ph^S`.
//!
//! Primary rays go through pixel centers. The hit triangle is found in
//! `f64`; the ray/triangle intersection is then recomputed on the recording
//! context so barycentrics, hit point and normal carry gradients. Discrete
//! decisions (coverage, hit triangle, horizon and shadow tests) are detached
//! and reported as branches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bvh::Bvh;
use crate::diff::{sum, Ctx, Emitted, Handle, Plain, Real, SubTape, Tape, Var, NONE};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{onb, V3};
use crate::model::{camera_ray, orthonormal_tangent, ModelBundle};
use crate::render::{analytic_radiance, camera, conv_light, input3, input_v3, material, Material, SurfaceQuery};
use crate::scene::SceneVars;
use crate::sh::{env_lookup, lobe_exponent, ENV_SIZE};
use crate::shading::{reflect, specular_intensity};

/// How a covered pixel's radiance is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Sampled environment lighting with shadow rays.
    MonteCarlo,
    /// Closed-form SH shading at the hit point, no visibility.
    Analytic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceOptions {
    pub spp: usize,
    pub seed: u64,
    pub estimator: Estimator,
    /// Cast shadow rays; off means `V ≡ 1` (horizon test still applies).
    pub shadows: bool,
}

impl TraceOptions {
    pub fn new(spp: usize, seed: u64) -> Self {
        TraceOptions { spp, seed, estimator: Estimator::MonteCarlo, shadows: true }
    }

    pub fn analytic() -> Self {
        TraceOptions { spp: 1, seed: 0, estimator: Estimator::Analytic, shadows: false }
    }
}

/// Primary-hit record of a covered pixel (plain values).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HitRecord {
    pub tri: u32,
    pub bary: [f64; 3],
    pub point: [f64; 3],
    /// Shading normal after normal mapping.
    pub normal: [f64; 3],
    pub uv: [f64; 2],
    /// Fraction of above-horizon sample rays blocked by the mesh.
    pub occluded: f64,
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub image: Image,
    pub hits: Vec<Option<HitRecord>>,
    /// Recorded radiance of covered pixels; empty when rendered plainly.
    pub radiance: Vec<Option<[Handle; 3]>>,
    /// Per-channel standard error of the MC mean (zero for analytic).
    pub std_err: Vec<[f64; 3]>,
}

impl RenderOutput {
    pub fn coverage(&self) -> Vec<bool> {
        self.hits.iter().map(Option::is_some).collect()
    }

    /// Shading normals as an image (zero where uncovered).
    pub fn normal_image(&self) -> Vec<Option<[f64; 3]>> {
        self.hits.iter().map(|h| h.map(|h| h.normal)).collect()
    }
}

struct PixelOut<S> {
    rad: [S; 3],
    hit: HitRecord,
    se: [f64; 3],
}

/// `k`-th of `n` stratified points in the unit square.
fn stratum(k: usize, n: usize, r1: f64, r2: f64) -> (f64, f64) {
    let m = (n as f64).sqrt().round() as usize;
    if m * m == n {
        (((k % m) as f64 + r1) / m as f64, ((k / m) as f64 + r2) / m as f64)
    } else {
        ((k as f64 + r1) / n as f64, r2)
    }
}

fn to_world<S: Real>(frame: &(V3<S>, V3<S>, V3<S>), l: [f64; 3]) -> V3<S> {
    frame.0.scale_f(l[0]) + frame.1.scale_f(l[1]) + frame.2.scale_f(l[2])
}

#[allow(clippy::too_many_arguments)]
fn trace_pixel<C: Ctx>(
    ctx: &C,
    scene: &SceneVars,
    bundle: &ModelBundle,
    bvh: &Bvh,
    opts: &TraceOptions,
    pixel: usize,
) -> Option<PixelOut<C::S>> {
    let w = scene.intr.width;
    let (px, py) = ((pixel % w) as f64 + 0.5, (pixel / w) as f64 + 0.5);
    let eye = scene.camera_center();
    let dcam = camera_ray(px, py, &scene.intr);
    let d_f = scene.rmat_f64().mul_vec(dcam);
    let Some(hit) = bvh.closest_hit(eye.to_array(), d_f.to_array(), 0.0, f64::INFINITY) else {
        ctx.note(NONE as u64);
        return None;
    };
    ctx.note(hit.tri as u64);
    let ids = bundle.triangles[hit.tri as usize].map(|i| i as usize);

    // differentiable Möller–Trumbore on the known triangle
    let (r, t) = camera(ctx, scene);
    let dc = V3::new(ctx.constant(dcam.x), ctx.constant(dcam.y), ctx.constant(dcam.z));
    let d = r.mul_vec(dc);
    let p = ids.map(|i| input_v3(ctx, &scene.verts[i]));
    let e1 = p[1] - p[0];
    let e2 = p[2] - p[0];
    let pv = d.cross(e2);
    let inv = ctx.constant(1.0) / e1.dot(pv);
    let s = t - p[0];
    let u = s.dot(pv) * inv;
    let q = s.cross(e1);
    let v = d.dot(q) * inv;
    let tt = e2.dot(q) * inv;
    let b0 = -(u + v) + 1.0;
    let bary = [b0, u, v];
    let x = t + d.scale(tt);

    let nrm = ids.map(|i| input_v3(ctx, &scene.normals[i]));
    let n = (nrm[0].scale(bary[0]) + nrm[1].scale(bary[1]) + nrm[2].scale(bary[2])).normalize();
    let bv = bary.map(|b| b.value());
    let uvs = ids.map(|i| bundle.uv[i]);
    let uv = [0, 1].map(|k| bary[0] * uvs[0][k] + bary[1] * uvs[1][k] + bary[2] * uvs[2][k]);
    let mix = |a: &[[f64; 3]]| {
        V3::from_array(a[ids[0]]).scale(bv[0])
            + V3::from_array(a[ids[1]]).scale(bv[1])
            + V3::from_array(a[ids[2]]).scale(bv[2])
    };
    let (tan, bit) = orthonormal_tangent(mix(&scene.tangents), n.value());
    let query = SurfaceQuery { normal: n, uv, tangent: tan, bitangent: bit };
    let m: Material<C::S> = material(ctx, scene, &query, || {
        let a = ids.map(|i| input3(ctx, &scene.vert_diffuse[i]));
        let b = ids.map(|i| input3(ctx, &scene.vert_specular[i]));
        let lerp = |a: [[C::S; 3]; 3]| [0, 1, 2].map(|c| a[0][c] * bary[0] + a[1][c] * bary[1] + a[2][c] * bary[2]);
        (lerp(a), lerp(b))
    });

    let x_f = x.value();
    let mut record = HitRecord {
        tri: hit.tri,
        bary: bv,
        point: x_f.to_array(),
        normal: m.normal.value().to_array(),
        uv: [uv[0].value(), uv[1].value()],
        occluded: 0.0,
    };

    let (rad, se) = match opts.estimator {
        Estimator::Analytic => (analytic_radiance(&conv_light(ctx, scene), &m, x, t), [0.0; 3]),
        Estimator::MonteCarlo => {
            let mut ng = (V3::from_array(scene.verts_f64[ids[1]]) - V3::from_array(scene.verts_f64[ids[0]]))
                .cross(V3::from_array(scene.verts_f64[ids[2]]) - V3::from_array(scene.verts_f64[ids[0]]))
                .normalize();
            if ng.dot(eye - x_f) < 0.0 {
                ng = -ng;
            }
            let origin = (x_f + ng.scale(1e-4 * scene.scale)).to_array();
            let env = scene.env.as_ref().expect("Monte-Carlo tracing needs env texels");
            let wv = (t - x).normalize();
            let sint = specular_intensity(m.specular);
            let refl = reflect(m.normal, wv);
            let fd = {
                let (a, b) = onb(m.normal);
                (a, b, m.normal)
            };
            let fs = {
                let (a, b) = onb(refl);
                (a, b, refl)
            };
            let e = lobe_exponent(scene.roughness);
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(pixel as u64);
            let spp = opts.spp.max(1);
            let mut diff: [Vec<C::S>; 3] = Default::default();
            let mut spec: [Vec<C::S>; 3] = Default::default();
            let mut samples = vec![[0.0f64; 3]; spp];
            let (mut above, mut blocked) = (0usize, 0usize);
            let mut visibility = 0u64;
            let sd = m.diffuse.map(|c| c.value());
            let sv = sint.value();
            for (k, sample) in samples.iter_mut().enumerate() {
                let (r1, r2, r3, r4): (f64, f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen(), rng.gen());
                let (a, b) = stratum(k, spp, r1, r2);
                let (rr, phi) = (a.sqrt(), 2.0 * std::f64::consts::PI * b);
                let ld = [rr * phi.cos(), rr * phi.sin(), (1.0 - a).sqrt()];
                let (a, b) = stratum(k, spp, r3, r4);
                let ca = a.powf(1.0 / (e + 1.0));
                let sa = (1.0 - ca * ca).max(0.0).sqrt();
                let phi = 2.0 * std::f64::consts::PI * b;
                let ls = [sa * phi.cos(), sa * phi.sin(), ca];
                for (lobe, (frame, local)) in [(&fd, ld), (&fs, ls)].into_iter().enumerate() {
                    let dir = to_world(frame, local);
                    let df = dir.value();
                    let up = df.dot(ng) > 0.0;
                    let vis = up && (!opts.shadows || bvh.shadow_query(origin, df.to_array(), 0.0, f64::INFINITY));
                    if up {
                        above += 1;
                        blocked += usize::from(!vis);
                    }
                    visibility = (visibility.rotate_left(1)) ^ u64::from(vis) ^ (u64::from(up) << 1);
                    if !vis {
                        continue;
                    }
                    for c in 0..3 {
                        let l = env_lookup(|i| ctx.input(env[c * ENV_SIZE * ENV_SIZE + i]), dir);
                        let lv = l.value();
                        sample[c] += if lobe == 0 { (1.0 - sv) * sd[c] * lv } else { sv * lv };
                        if lobe == 0 {
                            diff[c].push(l);
                        } else {
                            spec[c].push(l);
                        }
                    }
                }
                ctx.note(visibility);
            }
            record.occluded = if above > 0 { blocked as f64 / above as f64 } else { 0.0 };
            let inv_n = 1.0 / spp as f64;
            let keep = -sint + 1.0;
            let rad = [0, 1, 2].map(|c| {
                let ed = sum(ctx.constant(0.0), &diff[c]) * inv_n;
                let es = sum(ctx.constant(0.0), &spec[c]) * inv_n;
                m.diffuse[c] * ed * keep + es * sint
            });
            let se = [0, 1, 2].map(|c| {
                if spp < 2 {
                    return 0.0;
                }
                let mean = samples.iter().map(|s| s[c]).sum::<f64>() * inv_n;
                let var = samples.iter().map(|s| (s[c] - mean).powi(2)).sum::<f64>() / (spp - 1) as f64;
                (var * inv_n).sqrt()
            });
            (rad, se)
        }
    };
    Some(PixelOut { rad: rad.map(|c| c.relu()), hit: record, se })
}

fn check_env(scene: &SceneVars, opts: &TraceOptions) -> Result<()> {
    if opts.estimator == Estimator::MonteCarlo && scene.env.is_none() {
        return Err(Error::InvalidParams("scene was built without env texels".into()));
    }
    Ok(())
}

/// Trace every pixel on `tape`; radiance handles are recorded when the tape
/// records and branch decisions are noted either way.
pub fn trace(
    tape: &Tape,
    scene: &SceneVars,
    bundle: &ModelBundle,
    bvh: &Bvh,
    opts: &TraceOptions,
) -> Result<RenderOutput> {
    check_env(scene, opts)?;
    let (w, h) = (scene.intr.width, scene.intr.height);
    let recording = tape.is_recording();
    type Px = Result<(Option<(Vec<Emitted>, HitRecord, [f64; 3])>, u64)>;
    let pixels: Vec<Px> = (0..w * h)
        .into_par_iter()
        .map_init(
            || SubTape::new(recording),
            |st, k| {
                st.clear();
                let out = trace_pixel(&&*st, scene, bundle, bvh, opts, k);
                st.check_finite()?;
                let sig = st.signature();
                Ok((out.map(|o| (st.emit(&o.rad), o.hit, o.se)), sig))
            },
        )
        .collect();
    let mut out = RenderOutput {
        image: Image::new(w, h),
        hits: vec![None; w * h],
        radiance: vec![None; w * h],
        std_err: vec![[0.0; 3]; w * h],
    };
    for (k, px) in pixels.into_iter().enumerate() {
        let (res, sig) = px?;
        tape.note_branch(sig);
        if let Some((em, hit, se)) = res {
            let vars: Vec<Var<'_>> = em.iter().map(|e| tape.push_emitted(e)).collect();
            out.image.data[k] = [em[0].value, em[1].value, em[2].value];
            out.radiance[k] = Some([vars[0].handle(), vars[1].handle(), vars[2].handle()]);
            out.hits[k] = Some(hit);
            out.std_err[k] = se;
        }
    }
    Ok(out)
}

/// Plain (unrecorded) render; same values as [`trace`].
pub fn render(scene: &SceneVars, bundle: &ModelBundle, bvh: &Bvh, opts: &TraceOptions) -> Result<RenderOutput> {
    check_env(scene, opts)?;
    let (w, h) = (scene.intr.width, scene.intr.height);
    let pixels: Vec<Option<PixelOut<f64>>> =
        (0..w * h).into_par_iter().map(|k| trace_pixel(&Plain, scene, bundle, bvh, opts, k)).collect();
    let mut out = RenderOutput {
        image: Image::new(w, h),
        hits: vec![None; w * h],
        radiance: Vec::new(),
        std_err: vec![[0.0; 3]; w * h],
    };
    for (k, p) in pixels.into_iter().enumerate() {
        if let Some(p) = p {
            if p.rad.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    node: k as u64,
                    value: p.rad.into_iter().find(|v| !v.is_finite()).unwrap_or(f64::NAN),
                });
            }
            out.image.data[k] = p.rad;
            out.hits[k] = Some(p.hit);
            out.std_err[k] = p.se;
        }
    }
    Ok(out)
}

/// `E_ph^S = Σ_covered Σ_c |p_c − I_c|`.
pub fn ray_photo_loss<'t>(tape: &'t Tape, output: &RenderOutput, image: &Image) -> Result<Var<'t>> {
    if !output.image.same_size(image) {
        return Err(Error::ImageSize {
            module: "ray-renderer",
            expected: (output.image.width, output.image.height),
            found: (image.width, image.height),
        });
    }
    let mut terms = Vec::new();
    for (k, r) in output.radiance.iter().enumerate() {
        if let Some(r) = r {
            for c in 0..3 {
                terms.push((tape.at(r[c]) - image.data[k][c]).abs());
            }
        }
    }
    Ok(sum(tape.constant(0.0), &terms))
}
