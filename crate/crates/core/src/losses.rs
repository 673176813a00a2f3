//! Regularizers, loss weights and the three stage objectives.

use serde::{Deserialize, Serialize};

use crate::bvh::Bvh;
use crate::diff::gradcheck::Objective;
use crate::diff::{sum, Handle, Real, Tape, Var};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{Block, Intrinsics, ModelBundle, SceneParams};
use crate::raster::{landmark_loss, vertex_photo_loss};
use crate::scene::{BuildOptions, SceneVars, Stage, H3};
use crate::trace::{ray_photo_loss, trace, Estimator, RenderOutput, TraceOptions};

/// How the two photometric sums are scaled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhotoNorm {
    /// Plain sums.
    Sum,
    /// Both sums divided by the image pixel count, which keeps their ratio.
    PerPixel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub w_lm: f64,
    pub w_dr: f64,
    /// Weight of the statistical prior.
    pub w_p: f64,
    /// Weight of the soft box on `δ`.
    pub w_box: f64,
    pub w_s: f64,
    pub w_c_diffuse: f64,
    pub w_c_specular: f64,
    pub w_m: f64,
    pub w_b: f64,
    pub w_s_fine: f64,
    pub w_c_fine: f64,
    pub w_m_fine: f64,
    pub w_b_fine: f64,
    /// `w_c_diffuse` and `w_c_fine` are divided by this once per round.
    pub halving_factor: f64,
    /// Iterations per round.
    pub round_iterations: usize,
    pub photo_norm: PhotoNorm,
}

pub const W_LM: f64 = 0.1;
pub const W_DR: f64 = 0.5;
pub const W_M: f64 = 1e-4;
pub const W_S: f64 = 20.0;
pub const W_C_SPECULAR: f64 = 0.01;
pub const W_C_DIFFUSE: f64 = 0.2;
pub const W_M_FINE: f64 = 1e-4;
pub const W_S_FINE: f64 = 10.0;
pub const W_C_FINE: f64 = 1.0;
pub const HALVING_FACTOR: f64 = 2.0;
pub const W_B: f64 = 1.0;
pub const W_B_FINE: f64 = 1.0;
pub const W_P: f64 = 1e-3;
pub const ROUND_ITERATIONS: usize = 50;

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_lm: W_LM,
            w_dr: W_DR,
            w_p: W_P,
            w_box: 1.0,
            w_s: W_S,
            w_c_diffuse: W_C_DIFFUSE,
            w_c_specular: W_C_SPECULAR,
            w_m: W_M,
            w_b: W_B,
            w_s_fine: W_S_FINE,
            w_c_fine: W_C_FINE,
            w_m_fine: W_M_FINE,
            w_b_fine: W_B_FINE,
            halving_factor: HALVING_FACTOR,
            round_iterations: ROUND_ITERATIONS,
            photo_norm: PhotoNorm::PerPixel,
        }
    }
}

impl LossWeights {
    /// Unit prior and box weights with plain photometric sums.
    pub fn literal() -> Self {
        LossWeights { w_p: 1.0, photo_norm: PhotoNorm::Sum, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.w_lm,
            self.w_dr,
            self.w_p,
            self.w_box,
            self.w_s,
            self.w_c_diffuse,
            self.w_c_specular,
            self.w_m,
            self.w_b,
            self.w_s_fine,
            self.w_c_fine,
            self.w_m_fine,
            self.w_b_fine,
        ];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        if !(self.halving_factor >= 1.0) || self.round_iterations == 0 {
            return Err(Error::Config("halving factor must be >= 1 and rounds non-empty".into()));
        }
        Ok(())
    }
}

/// Weights for `round`: the diffuse and fine consistency weights are
/// divided by `halving_factor^round`, everything else is unchanged.
pub fn schedule_weights(w: &LossWeights, round: usize) -> LossWeights {
    let k = w.halving_factor.powi(round as i32);
    LossWeights { w_c_diffuse: w.w_c_diffuse / k, w_c_fine: w.w_c_fine / k, ..w.clone() }
}

/// `Σ α_k² / σ²_s,k + Σ β_k² / σ²_r,k`.
pub fn prior_loss<S: Real>(anchor: S, alpha: &[S], beta: &[S], bundle: &ModelBundle) -> S {
    let terms: Vec<S> = alpha
        .iter()
        .zip(&bundle.prior_var_shape)
        .chain(beta.iter().zip(&bundle.prior_var_refl))
        .map(|(x, v)| x.square() / *v)
        .collect();
    sum(anchor, &terms)
}

/// `Σ max(0, −x)² + max(0, x − 1)²`.
pub fn softbox_loss<S: Real>(anchor: S, xs: &[S]) -> S {
    let terms: Vec<S> = xs.iter().map(|&x| (-x).relu().square() + (x - 1.0).relu().square()).collect();
    sum(anchor, &terms)
}

/// Soft box on map values, averaged over texels.
pub fn map_softbox_loss<S: Real>(anchor: S, map: &[[S; 3]], texels: &[usize]) -> S {
    let flat: Vec<S> = texels.iter().flat_map(|&t| map[t]).collect();
    softbox_loss(anchor, &flat) / texels.len().max(1) as f64
}

/// Mean over `texels` of `Σ_c |m(t) − m(mirror(t))|`.
pub fn symmetry_loss<S: Real>(anchor: S, map: &[[S; 3]], bundle: &ModelBundle, texels: &[usize]) -> S {
    let terms: Vec<S> = texels
        .iter()
        .flat_map(|&t| {
            let m = bundle.texel_mirror(t);
            (0..3).map(move |c| (map[t][c] - map[m][c]).abs())
        })
        .collect();
    sum(anchor, &terms) / texels.len().max(1) as f64
}

/// Mean over `texels` of `Σ_c |refined − base|`.
pub fn consistency_loss<S: Real>(anchor: S, refined: &[[S; 3]], base: &[[S; 3]], texels: &[usize]) -> Result<S> {
    if refined.len() != base.len() {
        return Err(Error::ResolutionMismatch(refined.len(), base.len()));
    }
    let terms: Vec<S> = texels.iter().flat_map(|&t| (0..3).map(move |c| (refined[t][c] - base[t][c]).abs())).collect();
    Ok(sum(anchor, &terms) / texels.len().max(1) as f64)
}

/// Mean over `elems` of `‖x_i − mean(x_j, j ∈ N(i))‖²`.
pub fn smoothness_loss<S: Real>(anchor: S, values: &[[S; 3]], neighbors: &[Vec<u32>], elems: &[usize]) -> S {
    let terms: Vec<S> = elems
        .iter()
        .filter(|&&i| !neighbors[i].is_empty())
        .map(|&i| {
            let nb = &neighbors[i];
            let k = 1.0 / nb.len() as f64;
            let d = [0, 1, 2].map(|c| {
                let m: Vec<S> = nb.iter().map(|&j| values[j as usize][c]).collect();
                values[i][c] - sum(anchor, &m) * k
            });
            d[0].square() + d[1].square() + d[2].square()
        })
        .collect();
    sum(anchor, &terms) / elems.len().max(1) as f64
}

/// In-range 4-neighbourhood of every texel of a `res × res` map.
pub fn grid_neighbors(res: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::with_capacity(res * res);
    for j in 0..res {
        for i in 0..res {
            let mut nb = Vec::with_capacity(4);
            if i > 0 {
                nb.push((j * res + i - 1) as u32);
            }
            if i + 1 < res {
                nb.push((j * res + i + 1) as u32);
            }
            if j > 0 {
                nb.push(((j - 1) * res + i) as u32);
            }
            if j + 1 < res {
                nb.push(((j + 1) * res + i) as u32);
            }
            out.push(nb);
        }
    }
    out
}

/// Texels that map onto the surface.
pub fn atlas_texels(bundle: &ModelBundle) -> Vec<usize> {
    let r = bundle.texture_resolution;
    (0..r * r).filter(|&t| bundle.texel_hit(t).is_some()).collect()
}

/// Observations a stage loss compares against.
#[derive(Clone, Copy)]
pub struct Target<'a> {
    pub image: &'a Image,
    pub landmarks: Option<&'a [[f64; 2]]>,
}

/// A stage loss with its named, weighted terms.
pub struct StageLoss<'t> {
    pub total: Var<'t>,
    /// `(name, weighted value)` in evaluation order.
    pub terms: Vec<(&'static str, f64)>,
    pub render: RenderOutput,
}

fn vars<'t>(tape: &'t Tape, hs: &[H3]) -> Vec<[Var<'t>; 3]> {
    hs.iter().map(|h| h.map(|x| tape.at(x))).collect()
}

/// Composite objective of `scene.stage` at the given weights.
#[allow(clippy::too_many_arguments)]
pub fn stage_loss<'t>(
    tape: &'t Tape,
    scene: &SceneVars,
    bundle: &ModelBundle,
    bvh: &Bvh,
    target: Target<'_>,
    w: &LossWeights,
    opts: &TraceOptions,
) -> Result<StageLoss<'t>> {
    w.validate()?;
    let zero = tape.constant(0.0);
    let mut terms: Vec<(&'static str, Var<'t>)> = Vec::new();

    let render = trace(tape, scene, bundle, bvh, opts)?;
    let (ns, nr) = match w.photo_norm {
        PhotoNorm::Sum => (1.0, 1.0),
        PhotoNorm::PerPixel => {
            let n = (target.image.width * target.image.height) as f64;
            (n, n)
        }
    };
    terms.push(("photo_ray", ray_photo_loss(tape, &render, target.image)? / ns));
    if w.w_dr > 0.0 {
        terms.push(("photo_vertex", vertex_photo_loss(tape, scene, bundle, target.image, bvh)? * (w.w_dr / nr)));
    }
    if w.w_lm > 0.0 {
        let lm = target.landmarks.ok_or(Error::MissingLandmarks)?;
        terms.push(("landmarks", landmark_loss(tape, scene, bundle, lm)? * w.w_lm));
    }

    let tex = atlas_texels(bundle);
    match scene.stage {
        Stage::Coarse => {
            let at = |h: &[crate::diff::Handle]| h.iter().map(|&x| tape.at(x)).collect::<Vec<_>>();
            let (alpha, beta, delta) = (at(&scene.alpha), at(&scene.beta), at(&scene.delta));
            terms.push(("prior", prior_loss(zero, &alpha, &beta, bundle) * w.w_p));
            terms.push(("box", softbox_loss(zero, &delta) * w.w_box));
        }
        Stage::Medium => {
            let maps = scene.maps.as_ref().expect("medium scene has maps");
            let md = vars(tape, &maps.medium_diffuse);
            let ms = vars(tape, &maps.medium_specular);
            let bd = vars(tape, &maps.base_diffuse);
            let bs = vars(tape, &maps.base_specular);
            let nb = grid_neighbors(scene.res);
            terms.push((
                "symmetry",
                (symmetry_loss(zero, &md, bundle, &tex) + symmetry_loss(zero, &ms, bundle, &tex)) * w.w_s,
            ));
            terms.push((
                "consistency",
                consistency_loss(zero, &md, &bd, &tex)? * w.w_c_diffuse
                    + consistency_loss(zero, &ms, &bs, &tex)? * w.w_c_specular,
            ));
            terms.push((
                "smoothness",
                (smoothness_loss(zero, &md, &nb, &tex) + smoothness_loss(zero, &ms, &nb, &tex)) * w.w_m,
            ));
            terms.push(("map_box", (map_softbox_loss(zero, &md, &tex) + map_softbox_loss(zero, &ms, &tex)) * w.w_b));
        }
        Stage::Fine => {
            let maps = scene.maps.as_ref().expect("fine scene has maps");
            let fd = vars(tape, maps.fine_diffuse.as_ref().expect("fine diffuse"));
            let nm = vars(tape, maps.normal.as_ref().expect("fine normal map"));
            let md = vars(tape, &maps.medium_diffuse);
            let nb = grid_neighbors(scene.res);
            // normals enter the box and smoothness terms in their (n + 1) / 2 encoding
            let enc: Vec<[Var<'t>; 3]> = nm.iter().map(|n| n.map(|x| (x + 1.0) * 0.5)).collect();
            terms.push(("symmetry", symmetry_loss(zero, &fd, bundle, &tex) * w.w_s_fine));
            terms.push(("consistency", consistency_loss(zero, &fd, &md, &tex)? * w.w_c_fine));
            terms.push((
                "smoothness",
                (smoothness_loss(zero, &fd, &nb, &tex) + smoothness_loss(zero, &enc, &nb, &tex)) * w.w_m_fine,
            ));
            terms.push((
                "map_box",
                (map_softbox_loss(zero, &fd, &tex) + map_softbox_loss(zero, &enc, &tex)) * w.w_b_fine,
            ));
        }
    }
    let parts: Vec<Var<'t>> = terms.iter().map(|t| t.1).collect();
    let total = sum(zero, &parts);
    tape.check_finite()?;
    Ok(StageLoss { total, terms: terms.into_iter().map(|(n, v)| (n, v.value())).collect(), render })
}

/// Trainable blocks of a stage, in leaf order.
pub fn stage_blocks(stage: Stage) -> Vec<Block> {
    let want: &[Block] = match stage {
        Stage::Coarse => &[Block::Alpha, Block::Delta, Block::Beta, Block::Rot, Block::Trans, Block::Sh],
        Stage::Medium => &[Block::MediumDiffuse, Block::MediumSpecular],
        Stage::Fine => &[Block::FineNormal, Block::FineDiffuse],
    };
    Block::ALL.into_iter().filter(|b| want.contains(b)).collect()
}

/// Build the scene for `params` and evaluate its stage loss.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_stage<'t>(
    tape: &'t Tape,
    bundle: &ModelBundle,
    params: &SceneParams,
    intr: Intrinsics,
    trainable: &[Block],
    stage: Stage,
    target: Target<'_>,
    w: &LossWeights,
    opts: &TraceOptions,
) -> Result<(StageLoss<'t>, SceneVars, crate::scene::Leaves)> {
    let build = BuildOptions { stage, env: opts.estimator == Estimator::MonteCarlo };
    let (scene, leaves) = SceneVars::build(tape, bundle, params, intr, trainable, build)?;
    let bvh = Bvh::build(&scene.verts_f64, &bundle.triangles);
    let loss = stage_loss(tape, &scene, bundle, &bvh, target, w, opts)?;
    Ok((loss, scene, leaves))
}

/// A stage loss as a function of the flattened trainable blocks.
pub struct StageObjective<'a> {
    pub bundle: &'a ModelBundle,
    pub params: SceneParams,
    pub intr: Intrinsics,
    pub stage: Stage,
    pub blocks: Vec<Block>,
    pub target: Target<'a>,
    pub weights: LossWeights,
    pub trace: TraceOptions,
}

impl StageObjective<'_> {
    /// Current values of the trainable blocks, concatenated.
    pub fn point(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|&b| self.params.block(b).to_vec()).collect()
    }

    fn with_point(&self, x: &[f64]) -> SceneParams {
        let mut p = self.params.clone();
        let mut k = 0;
        for &b in &self.blocks {
            let dst = p.block_mut(b);
            dst.copy_from_slice(&x[k..k + dst.len()]);
            k += dst.len();
        }
        p
    }
}

impl Objective for StageObjective<'_> {
    fn label(&self, i: usize) -> String {
        let mut k = 0;
        for &b in &self.blocks {
            k += self.params.block(b).len();
            if i < k {
                return b.name().to_string();
            }
        }
        panic!("coordinate {i} out of range")
    }

    fn eval<'t>(&self, tape: &'t Tape, x: &[f64]) -> Result<(Var<'t>, Vec<Handle>)> {
        let p = self.with_point(x);
        let (loss, _, leaves) = evaluate_stage(
            tape,
            self.bundle,
            &p,
            self.intr,
            &self.blocks,
            self.stage,
            self.target,
            &self.weights,
            &self.trace,
        )?;
        let handles = self.blocks.iter().flat_map(|&b| leaves.get(b).map(|h| h.to_vec()).unwrap_or_default()).collect();
        Ok((loss.total, handles))
    }
}
