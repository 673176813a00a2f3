//! Recorded scene quantities shared by both renderers and the losses.
//!
//! [`SceneVars::build`] turns [`SceneParams`] into handles on a tape: leaves
//! for the trainable blocks, derived nodes for vertices, normals, albedos,
//! uv maps, convolved light and the environment map. On a passive tape
//! every handle is a constant and the same code computes plain values.

use serde::{Deserialize, Serialize};

use crate::diff::{Handle, Real, Tape, Var};
use crate::error::Result;
use crate::math::{axis_angle_to_matrix, V3};
use crate::model::{
    tangent_frames, vertex_albedo, vertex_normals, vertex_positions, Block, Intrinsics, ModelBundle, SceneParams,
};
use crate::sh::{band_of, brdf_kernel_coeffs, env_texel_basis, half_cosine_coeffs, NCOEF};

/// Optimization stage; decides which albedo and normal sources are rendered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Coarse,
    Medium,
    Fine,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Coarse, Stage::Medium, Stage::Fine];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Coarse => "coarse",
            Stage::Medium => "medium",
            Stage::Fine => "fine",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub type H3 = [Handle; 3];

/// uv-space maps of the medium and fine stages.
#[derive(Clone, Debug)]
pub struct SceneMaps {
    /// Per-vertex albedo resampled into uv space (the coarse maps).
    pub base_diffuse: Vec<H3>,
    pub base_specular: Vec<H3>,
    /// `D̂ = base + Δ_d`.
    pub medium_diffuse: Vec<H3>,
    /// `Ŝ = base + Δ_s`.
    pub medium_specular: Vec<H3>,
    /// `D̄ = D̂ + Δ̂_d` in the fine stage.
    pub fine_diffuse: Option<Vec<H3>>,
    /// Tangent-space normal map `M̄` in the fine stage.
    pub normal: Option<Vec<H3>>,
}

impl SceneMaps {
    /// Diffuse map the stage renders with.
    pub fn diffuse(&self) -> &[H3] {
        self.fine_diffuse.as_deref().unwrap_or(&self.medium_diffuse)
    }
}

/// Handles of everything the renderers and losses read.
pub struct SceneVars {
    pub stage: Stage,
    pub intr: Intrinsics,
    pub roughness: f64,
    pub res: usize,
    pub rot: H3,
    pub trans: H3,
    /// Row-major `R`.
    pub rmat: [H3; 3],
    pub alpha: Vec<Handle>,
    pub delta: Vec<Handle>,
    pub beta: Vec<Handle>,
    /// Channel-major SH coefficients.
    pub sh: Vec<Handle>,
    pub conv_diffuse: Vec<Handle>,
    pub conv_specular: Vec<Handle>,
    /// Channel-major env texels (`3 × 64 × 64`), when requested.
    pub env: Option<Vec<Handle>>,
    pub verts: Vec<H3>,
    pub normals: Vec<H3>,
    pub tangents: Vec<[f64; 3]>,
    pub bitangents: Vec<[f64; 3]>,
    pub vert_diffuse: Vec<H3>,
    pub vert_specular: Vec<H3>,
    pub maps: Option<SceneMaps>,
    /// Plain vertex positions (for the BVH and rasterization).
    pub verts_f64: Vec<[f64; 3]>,
    pub normals_f64: Vec<[f64; 3]>,
    /// Bounding-box diagonal of the mesh.
    pub scale: f64,
}

/// Leaf handles created for the trainable blocks, in block order.
#[derive(Clone, Debug, Default)]
pub struct Leaves {
    pub blocks: Vec<(Block, Vec<Handle>)>,
}

impl Leaves {
    pub fn get(&self, b: Block) -> Option<&[Handle]> {
        self.blocks.iter().find(|(k, _)| *k == b).map(|(_, h)| h.as_slice())
    }
}

/// What to build beyond the always-present geometry and light.
#[derive(Clone, Copy, Debug)]
pub struct BuildOptions {
    pub stage: Stage,
    pub env: bool,
}

fn block_vars<'t>(
    tape: &'t Tape,
    p: &SceneParams,
    blk: Block,
    trainable: &[Block],
    leaves: &mut Leaves,
) -> Vec<Var<'t>> {
    let vals = p.block(blk);
    if trainable.contains(&blk) {
        let vars: Vec<Var<'t>> = vals.iter().map(|&x| tape.leaf(x)).collect();
        leaves.blocks.push((blk, vars.iter().map(|v| v.handle()).collect()));
        vars
    } else {
        vals.iter().map(|&x| tape.constant(x)).collect()
    }
}

fn h3(v: [Var<'_>; 3]) -> H3 {
    v.map(|x| x.handle())
}

fn v3<'t>(tape: &'t Tape, h: &H3) -> V3<Var<'t>> {
    V3::new(tape.at(h[0]), tape.at(h[1]), tape.at(h[2]))
}

impl SceneVars {
    pub fn build(
        tape: &Tape,
        b: &ModelBundle,
        p: &SceneParams,
        intr: Intrinsics,
        trainable: &[Block],
        opts: BuildOptions,
    ) -> Result<(SceneVars, Leaves)> {
        p.validate(b)?;
        let mut leaves = Leaves::default();
        let mut block = |blk: Block| block_vars(tape, p, blk, trainable, &mut leaves);
        let alpha = block(Block::Alpha);
        let delta = block(Block::Delta);
        let beta = block(Block::Beta);
        let rot = block(Block::Rot);
        let trans = block(Block::Trans);
        let sh = block(Block::Sh);
        let med_d = block(Block::MediumDiffuse);
        let med_s = block(Block::MediumSpecular);
        let fine_n = block(Block::FineNormal);
        let fine_d = block(Block::FineDiffuse);
        let zero = tape.constant(0.0);

        let r = axis_angle_to_matrix(V3::new(rot[0], rot[1], rot[2]));
        let rmat = r.rows.map(|row| h3([row.x, row.y, row.z]));

        let verts = vertex_positions(b, zero, &alpha, &delta);
        let normals = vertex_normals(&verts, &b.triangles);
        let verts_f64: Vec<[f64; 3]> = verts.iter().map(|v| v.value().to_array()).collect();
        let normals_f64: Vec<[f64; 3]> = normals.iter().map(|v| v.value().to_array()).collect();
        let (tangents, bitangents) = tangent_frames(&verts_f64, &normals_f64, &b.uv, &b.triangles);

        let vert_diffuse = vertex_albedo(&b.mean_diffuse, &b.diffuse_basis, zero, &beta);
        let vert_specular = vertex_albedo(&b.mean_specular, &b.specular_basis, zero, &beta);

        let a = half_cosine_coeffs();
        let s = brdf_kernel_coeffs(p.roughness)?;
        let conv = |k: &[f64; 9]| -> Vec<Handle> {
            sh.iter().enumerate().map(|(i, c)| (*c * k[band_of(i % NCOEF)]).handle()).collect()
        };
        let conv_diffuse = conv(&a);
        let conv_specular = conv(&s);

        let env = opts.env.then(|| bake_env_vars(&sh));

        let maps = match opts.stage {
            Stage::Coarse => None,
            Stage::Medium | Stage::Fine => {
                let res = b.texture_resolution;
                let texels = res * res;
                let base_d = resample_to_uv(b, &vert_diffuse, zero);
                let base_s = resample_to_uv(b, &vert_specular, zero);
                let add = |base: &[[Var<'_>; 3]], inc: &[Var<'_>]| -> Vec<H3> {
                    (0..texels).map(|t| h3([0, 1, 2].map(|c| base[t][c] + inc[3 * t + c]))).collect()
                };
                let medium_diffuse = add(&base_d, &med_d);
                let medium_specular = add(&base_s, &med_s);
                let (fine_diffuse, normal) = if opts.stage == Stage::Fine {
                    let md: Vec<[Var<'_>; 3]> = medium_diffuse.iter().map(|h| h.map(|x| tape.at(x))).collect();
                    let fd = add(&md, &fine_d);
                    let nm = (0..texels).map(|t| h3([fine_n[3 * t], fine_n[3 * t + 1], fine_n[3 * t + 2]])).collect();
                    (Some(fd), Some(nm))
                } else {
                    (None, None)
                };
                Some(SceneMaps {
                    base_diffuse: base_d.into_iter().map(h3).collect(),
                    base_specular: base_s.into_iter().map(h3).collect(),
                    medium_diffuse,
                    medium_specular,
                    fine_diffuse,
                    normal,
                })
            }
        };

        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &verts_f64 {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        let scale = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2)).sqrt();

        let vars = SceneVars {
            stage: opts.stage,
            intr,
            roughness: p.roughness,
            res: b.texture_resolution,
            rot: h3([rot[0], rot[1], rot[2]]),
            trans: h3([trans[0], trans[1], trans[2]]),
            rmat,
            alpha: alpha.iter().map(|v| v.handle()).collect(),
            delta: delta.iter().map(|v| v.handle()).collect(),
            beta: beta.iter().map(|v| v.handle()).collect(),
            sh: sh.iter().map(|v| v.handle()).collect(),
            conv_diffuse,
            conv_specular,
            env,
            verts: verts.iter().map(|v| h3([v.x, v.y, v.z])).collect(),
            normals: normals.iter().map(|v| h3([v.x, v.y, v.z])).collect(),
            tangents,
            bitangents,
            vert_diffuse: vert_diffuse.into_iter().map(h3).collect(),
            vert_specular: vert_specular.into_iter().map(h3).collect(),
            maps,
            verts_f64,
            normals_f64,
            scale,
        };
        Ok((vars, leaves))
    }

    pub fn vertex<'t>(&self, tape: &'t Tape, i: usize) -> V3<Var<'t>> {
        v3(tape, &self.verts[i])
    }

    pub fn normal<'t>(&self, tape: &'t Tape, i: usize) -> V3<Var<'t>> {
        v3(tape, &self.normals[i])
    }

    /// Plain camera center.
    pub fn camera_center(&self) -> V3<f64> {
        V3::new(self.trans[0].val, self.trans[1].val, self.trans[2].val)
    }

    /// Plain rotation matrix.
    pub fn rmat_f64(&self) -> crate::math::M3<f64> {
        crate::math::M3 { rows: self.rmat.map(|r| V3::new(r[0].val, r[1].val, r[2].val)) }
    }
}

/// Env texels `max(0, Σ γ_k Y_k(dir_t))` as one node per texel and channel.
fn bake_env_vars(sh: &[Var<'_>]) -> Vec<Handle> {
    let ys = env_texel_basis();
    let mut out = Vec::with_capacity(3 * ys.len());
    for c in 0..3 {
        let coeffs = &sh[c * NCOEF..(c + 1) * NCOEF];
        for y in ys {
            let v: f64 = coeffs.iter().zip(y).map(|(a, b)| a.value() * b).sum();
            let anchor = coeffs[0];
            anchor.branch(u64::from(v > 0.0));
            if v > 0.0 {
                let parents: Vec<(Var<'_>, f64)> = coeffs.iter().zip(y).map(|(a, &b)| (*a, b)).collect();
                out.push(anchor.custom(v, &parents).handle());
            } else {
                out.push(Handle::constant(0.0));
            }
        }
    }
    out
}

/// Per-vertex attribute resampled at every texel's surface point.
pub(crate) fn resample_to_uv<S: Real>(b: &ModelBundle, attr: &[[S; 3]], zero: S) -> Vec<[S; 3]> {
    let res = b.texture_resolution;
    (0..res * res)
        .map(|t| match b.texel_hit(t) {
            Some((tri, bary)) => {
                let ids = b.triangles[tri as usize];
                [0, 1, 2].map(|c| {
                    let val = bary[0] * attr[ids[0] as usize][c].value()
                        + bary[1] * attr[ids[1] as usize][c].value()
                        + bary[2] * attr[ids[2] as usize][c].value();
                    zero.custom(
                        val,
                        &[
                            (attr[ids[0] as usize][c], bary[0]),
                            (attr[ids[1] as usize][c], bary[1]),
                            (attr[ids[2] as usize][c], bary[2]),
                        ],
                    )
                })
            }
            None => [zero; 3],
        })
        .collect()
}
