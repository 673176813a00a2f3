//! Surface evaluation shared by the vertex renderer and the ray tracer:
//! camera, stage-dependent material lookup and analytic shading.

use crate::diff::{Ctx, Handle, Real};
use crate::math::{M3, V3};
use crate::model::sample_bilinear;
use crate::scene::{SceneVars, H3};
use crate::shading::{shading_normal, ConvLight};

/// Material at a surface point, in the context's scalar type.
#[derive(Clone, Copy, Debug)]
pub struct Material<S> {
    pub diffuse: [S; 3],
    pub specular: [S; 3],
    /// Unit shading normal after normal mapping.
    pub normal: V3<S>,
}

/// Geometry of a surface point needed to look up its material.
#[derive(Clone, Copy, Debug)]
pub struct SurfaceQuery<S> {
    /// Unit interpolated normal.
    pub normal: V3<S>,
    pub uv: [S; 2],
    pub tangent: V3<f64>,
    pub bitangent: V3<f64>,
}

pub fn input3<C: Ctx>(ctx: &C, h: &H3) -> [C::S; 3] {
    h.map(|x| ctx.input(x))
}

pub fn input_v3<C: Ctx>(ctx: &C, h: &H3) -> V3<C::S> {
    V3::new(ctx.input(h[0]), ctx.input(h[1]), ctx.input(h[2]))
}

/// Recorded `(R, T)`.
pub fn camera<C: Ctx>(ctx: &C, scene: &SceneVars) -> (M3<C::S>, V3<C::S>) {
    let rows = scene.rmat.map(|r| input_v3(ctx, &r));
    (M3 { rows }, input_v3(ctx, &scene.trans))
}

pub fn conv_light<C: Ctx>(ctx: &C, scene: &SceneVars) -> ConvLight<C::S> {
    let f = |hs: &[Handle]| hs.iter().map(|&h| ctx.input(h)).collect();
    ConvLight { diffuse: f(&scene.conv_diffuse), specular: f(&scene.conv_specular) }
}

fn sample_map<C: Ctx>(ctx: &C, res: usize, map: &[H3], uv: [C::S; 2]) -> [C::S; 3] {
    [0, 1, 2].map(|c| sample_bilinear(res, |t| ctx.input(map[t][c]), uv[0], uv[1]))
}

/// Stage-dependent albedos and shading normal at a surface point.
///
/// `vertex_albedo` supplies the interpolated per-vertex albedos and is only
/// called in the coarse stage. The coarse and medium stages still route the
/// normal through [`shading_normal`] with the constant `(0, 0, 1)`, so an
/// identity normal map reproduces them exactly.
pub fn material<C: Ctx>(
    ctx: &C,
    scene: &SceneVars,
    q: &SurfaceQuery<C::S>,
    vertex_albedo: impl FnOnce() -> ([C::S; 3], [C::S; 3]),
) -> Material<C::S> {
    let (diffuse, specular) = match &scene.maps {
        None => vertex_albedo(),
        Some(m) => {
            (sample_map(ctx, scene.res, m.diffuse(), q.uv), sample_map(ctx, scene.res, &m.medium_specular, q.uv))
        }
    };
    let nbar = match scene.maps.as_ref().and_then(|m| m.normal.as_ref()) {
        Some(nm) => {
            let s = sample_map(ctx, scene.res, nm, q.uv);
            V3::new(s[0], s[1], s[2])
        }
        None => V3::new(ctx.constant(0.0), ctx.constant(0.0), ctx.constant(1.0)),
    };
    Material { diffuse, specular, normal: shading_normal(q.tangent, q.bitangent, q.normal, nbar) }
}

/// Analytic irradiance `(1 − s) B_d + s B_s` for a material seen from `eye`.
pub fn analytic_radiance<S: Real>(light: &ConvLight<S>, m: &Material<S>, pos: V3<S>, eye: V3<S>) -> [S; 3] {
    let w = (eye - pos).normalize();
    light.shade(m.normal, w, m.diffuse, m.specular)
}
