//! Coarse → medium → fine per-image optimization.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diff::{Dual3, Real, Tape};
use crate::error::{Error, Result};
use crate::fixtures::render_params;
use crate::image::Image;
use crate::losses::{evaluate_stage, schedule_weights, LossWeights, Target};
use crate::math::{axis_angle_to_matrix, V3};
use crate::model::{Block, Intrinsics, ModelBundle, SceneParams};
use crate::scene::{BuildOptions, SceneVars, Stage};
use crate::sh::{env_texel_basis, SHLight, ENV_SIZE, NCOEF};
use crate::trace::TraceOptions;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub cfg: AdamConfig,
}

impl AdamState {
    pub fn new(n: usize, cfg: AdamConfig) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0, cfg }
    }

    /// One bias-corrected step with a per-coordinate learning rate.
    pub fn step(&mut self, x: &mut [f64], g: &[f64], lr: &[f64]) -> Result<()> {
        let n = self.m.len();
        if x.len() != n || g.len() != n || lr.len() != n {
            return Err(Error::InvalidPlan(format!(
                "adam: {n} moments but {} params, {} grads, {} rates",
                x.len(),
                g.len(),
                lr.len()
            )));
        }
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..n {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g[i] * g[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            x[i] -= lr[i] * mh / (vh.sqrt() + eps);
        }
        Ok(())
    }
}

/// Per-block learning rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub alpha: f64,
    pub delta: f64,
    pub beta: f64,
    /// Radians.
    pub rot: f64,
    /// Model units (millimeters).
    pub trans: f64,
    pub sh: f64,
    pub maps: f64,
    pub normal: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            alpha: 0.05,
            delta: 0.05,
            beta: 0.05,
            rot: 0.005,
            trans: 0.5,
            sh: 0.05,
            maps: 0.002,
            normal: 0.002,
        }
    }
}

impl LearningRates {
    pub fn of(&self, b: Block) -> f64 {
        match b {
            Block::Alpha => self.alpha,
            Block::Delta => self.delta,
            Block::Beta => self.beta,
            Block::Rot => self.rot,
            Block::Trans => self.trans,
            Block::Sh => self.sh,
            Block::MediumDiffuse | Block::MediumSpecular | Block::FineDiffuse => self.maps,
            Block::FineNormal => self.normal,
        }
    }
}

/// One stage of the schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagePlan {
    pub stage: Stage,
    pub trainable: Vec<Block>,
    /// Blocks refined alongside at a reduced rate.
    #[serde(default)]
    pub corefine: Vec<Block>,
    /// Blocks held fixed; anything not listed as active is fixed anyway.
    #[serde(default)]
    pub frozen: Vec<Block>,
    /// Zero skips the stage.
    pub iterations: usize,
}

const COARSE_BLOCKS: [Block; 6] = [Block::Alpha, Block::Delta, Block::Beta, Block::Rot, Block::Trans, Block::Sh];

impl StagePlan {
    pub fn coarse(iterations: usize) -> Self {
        Self::new(Stage::Coarse, COARSE_BLOCKS.to_vec(), vec![], iterations)
    }

    /// Medium maps; with `corefine` the coarse reflectance and light follow
    /// at a reduced rate while geometry and pose stay fixed.
    pub fn medium(iterations: usize, corefine: bool) -> Self {
        let co = if corefine { vec![Block::Beta, Block::Sh] } else { vec![] };
        Self::new(Stage::Medium, vec![Block::MediumDiffuse, Block::MediumSpecular], co, iterations)
    }

    pub fn fine(iterations: usize) -> Self {
        Self::new(Stage::Fine, vec![Block::FineNormal, Block::FineDiffuse], vec![], iterations)
    }

    fn new(stage: Stage, trainable: Vec<Block>, corefine: Vec<Block>, iterations: usize) -> Self {
        let frozen = Block::ALL.into_iter().filter(|b| !trainable.contains(b) && !corefine.contains(b)).collect();
        StagePlan { stage, trainable, corefine, frozen, iterations }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for b in self.trainable.iter().chain(&self.corefine).chain(&self.frozen) {
            if !seen.insert(*b) {
                return Err(Error::InvalidPlan(format!(
                    "{} stage lists block {} more than once",
                    self.stage,
                    b.name()
                )));
            }
        }
        let maps_ok = |b: &Block| match self.stage {
            Stage::Coarse => !b.is_map(),
            Stage::Medium => !matches!(b, Block::FineNormal | Block::FineDiffuse),
            Stage::Fine => true,
        };
        if let Some(b) = self.trainable.iter().chain(&self.corefine).find(|b| !maps_ok(b)) {
            return Err(Error::InvalidPlan(format!("{} stage cannot train {}", self.stage, b.name())));
        }
        Ok(())
    }

    /// Trainable and co-refined blocks in leaf order.
    pub fn active(&self) -> Vec<Block> {
        Block::ALL.into_iter().filter(|b| self.trainable.contains(b) || self.corefine.contains(b)).collect()
    }
}

/// How the starting point of the coarse stage is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Landmark alignment for the camera, gray light matched to the image.
    Landmarks,
    /// Start from the parameters passed in.
    Given,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub weights: LossWeights,
    pub stages: Vec<StagePlan>,
    pub lr: LearningRates,
    /// Multiplier on the rates of co-refined blocks.
    pub corefine_lr_scale: f64,
    pub adam: AdamConfig,
    pub spp: usize,
    pub seed: u64,
    pub roughness: f64,
    pub init: InitMode,
    /// Per-stage learning rates fall linearly to this fraction of their
    /// value over the stage.
    pub final_lr_fraction: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            weights: LossWeights::default(),
            stages: vec![StagePlan::coarse(300), StagePlan::medium(200, true), StagePlan::fine(200)],
            lr: LearningRates::default(),
            corefine_lr_scale: 0.1,
            adam: AdamConfig::default(),
            spp: 8,
            seed: 1,
            roughness: crate::fixtures::ROUGHNESS,
            init: InitMode::Landmarks,
            final_lr_fraction: 0.1,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        for s in &self.stages {
            s.validate()?;
        }
        if self.spp == 0 {
            return Err(Error::Config("spp must be positive".into()));
        }
        if !(self.corefine_lr_scale >= 0.0) || !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(Error::Config("learning-rate scales out of range".into()));
        }
        Ok(())
    }

    pub fn trace(&self) -> TraceOptions {
        TraceOptions::new(self.spp, self.seed)
    }
}

/// One logged iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub stage: Stage,
    pub iteration: usize,
    pub total: f64,
    pub terms: Vec<(String, f64)>,
}

#[derive(Clone, Debug)]
pub struct StageResult {
    pub stage: Stage,
    pub params: SceneParams,
    /// Render of `params` at this stage with the fit's sampling options.
    pub render: Image,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub params: SceneParams,
    pub init: SceneParams,
    pub stages: Vec<StageResult>,
    pub log: Vec<LogRow>,
}

impl FitResult {
    pub fn stage(&self, s: Stage) -> Option<&StageResult> {
        self.stages.iter().find(|r| r.stage == s)
    }
}

/// Camera center placing the mean-shape landmarks over the detected ones
/// with the identity rotation (least squares in the image plane, depth from
/// the ratio of spreads).
pub fn align_translation(bundle: &ModelBundle, intr: &Intrinsics, landmarks: &[[f64; 2]]) -> Result<[f64; 3]> {
    if landmarks.len() != bundle.landmark_vertex_ids.len() {
        return Err(Error::LandmarkCount(landmarks.len()));
    }
    let pts: Vec<[f64; 3]> = bundle
        .landmark_vertex_ids
        .iter()
        .map(|&i| {
            let i = i as usize;
            [bundle.mean_shape[3 * i], bundle.mean_shape[3 * i + 1], bundle.mean_shape[3 * i + 2]]
        })
        .collect();
    let n = pts.len() as f64;
    let centroid = |f: &dyn Fn(usize) -> f64| (0..pts.len()).map(f).sum::<f64>() / n;
    let (mx, my, mz) = (centroid(&|i| pts[i][0]), centroid(&|i| pts[i][1]), centroid(&|i| pts[i][2]));
    let (lx, ly) = (centroid(&|i| landmarks[i][0]), centroid(&|i| landmarks[i][1]));
    let spread_m: f64 = pts.iter().map(|p| ((p[0] - mx).powi(2) + (p[1] - my).powi(2)).sqrt()).sum();
    let spread_i: f64 = landmarks.iter().map(|l| ((l[0] - lx).powi(2) + (l[1] - ly).powi(2)).sqrt()).sum();
    if !(spread_i > 0.0) || !(spread_m > 0.0) {
        return Err(Error::InvalidParams("degenerate landmark configuration".into()));
    }
    let depth = intr.f * spread_m / spread_i;
    Ok([mx - (lx - intr.cx) * depth / intr.f, my - (ly - intr.cy) * depth / intr.f, mz - depth])
}

/// Scale a constant light so the analytic coarse render matches the mean
/// image color over the pixels it covers.
fn gray_light(bundle: &ModelBundle, p: &SceneParams, intr: Intrinsics, image: &Image) -> Result<SHLight> {
    let mut probe = p.clone();
    probe.sh = SHLight::constant([1.0; 3]);
    let (out, _) = render_params(bundle, &probe, intr, Stage::Coarse, &TraceOptions::analytic())?;
    let mut rgb = [0.0; 3];
    for c in 0..3 {
        let (mut num, mut den) = (0.0, 0.0);
        for (k, hit) in out.hits.iter().enumerate() {
            if hit.is_some() {
                num += image.data[k][c];
                den += out.image.data[k][c];
            }
        }
        rgb[c] = if den > 0.0 { (num / den).max(0.05) } else { 1.0 };
    }
    Ok(SHLight::constant(rgb))
}

/// Starting parameters: zero coefficients, identity rotation, landmark
/// aligned camera and a gray light.
pub fn initialize(
    bundle: &ModelBundle,
    intr: Intrinsics,
    image: &Image,
    landmarks: &[[f64; 2]],
    roughness: f64,
) -> Result<SceneParams> {
    let trans = align_translation(bundle, &intr, landmarks)?;
    let mut p = SceneParams::neutral(bundle, trans, SHLight::constant([1.0; 3]), roughness);
    p.sh = gray_light(bundle, &p, intr, image)?;
    Ok(p)
}

/// Optimizer coordinates of the active blocks, concatenated.
///
/// When rotation and translation are both optimized, the translation slot
/// holds the model origin in camera space `u = −Rᵀ T` instead of the camera
/// center, so a rotation step turns the model in place rather than swinging
/// it across the image.
struct Coords {
    blocks: Vec<Block>,
    offsets: Vec<usize>,
    object_pose: bool,
}

impl Coords {
    fn new(blocks: Vec<Block>, p: &SceneParams) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut k = 0;
        for &b in &blocks {
            offsets.push(k);
            k += p.block(b).len();
        }
        let object_pose = blocks.contains(&Block::Rot) && blocks.contains(&Block::Trans);
        Coords { blocks, offsets, object_pose }
    }

    fn offset(&self, b: Block) -> Option<usize> {
        self.blocks.iter().position(|&x| x == b).map(|i| self.offsets[i])
    }

    fn get(&self, p: &SceneParams) -> Vec<f64> {
        let mut x: Vec<f64> = self.blocks.iter().flat_map(|&b| p.block(b).to_vec()).collect();
        if self.object_pose {
            let r = axis_angle_to_matrix(V3::from_array(p.rot));
            let u = r.tmul_vec(V3::from_array(p.trans)).scale_f(-1.0);
            let k = self.offset(Block::Trans).expect("trans active");
            x[k..k + 3].copy_from_slice(&u.to_array());
        }
        x
    }

    fn set(&self, p: &mut SceneParams, x: &[f64]) {
        for (&b, &k) in self.blocks.iter().zip(&self.offsets) {
            let dst = p.block_mut(b);
            let n = dst.len();
            dst.copy_from_slice(&x[k..k + n]);
        }
        if self.object_pose {
            let r = axis_angle_to_matrix(V3::from_array(p.rot));
            p.trans = r.mul_vec(V3::from_array(p.trans)).scale_f(-1.0).to_array();
        }
    }

    /// Map adjoints with respect to the stored blocks onto the optimizer
    /// coordinates at `p`.
    fn pull_back(&self, p: &SceneParams, g: &mut [f64]) {
        if !self.object_pose {
            return;
        }
        let kr = self.offset(Block::Rot).expect("rot active");
        let kt = self.offset(Block::Trans).expect("trans active");
        let gt = V3::from_slice(&g[kt..kt + 3]);
        let rd = V3::new(Dual3::seed(p.rot[0], 0), Dual3::seed(p.rot[1], 1), Dual3::seed(p.rot[2], 2));
        let r = axis_angle_to_matrix(rd);
        let rv = r.value();
        let u = rv.tmul_vec(V3::from_array(p.trans)).scale_f(-1.0);
        // T = −R(rot) u
        let t = r.mul_vec(u.lift(rd.x)).scale_f(-1.0);
        for j in 0..3 {
            g[kr + j] += gt.x * t.x.d[j] + gt.y * t.y.d[j] + gt.z * t.z.d[j];
        }
        let gu = rv.tmul_vec(gt).scale_f(-1.0);
        g[kt..kt + 3].copy_from_slice(&gu.to_array());
    }
}

/// Run one stage plan from `p`.
#[allow(clippy::too_many_arguments)]
pub fn run_stage(
    plan: &StagePlan,
    cfg: &FitConfig,
    bundle: &ModelBundle,
    intr: Intrinsics,
    target: Target<'_>,
    p: &mut SceneParams,
    log: &mut Vec<LogRow>,
    mut on_iter: impl FnMut(&LogRow),
) -> Result<()> {
    plan.validate()?;
    let blocks = plan.active();
    let lr0: Vec<f64> = blocks
        .iter()
        .flat_map(|&b| {
            let scale = if plan.corefine.contains(&b) { cfg.corefine_lr_scale } else { 1.0 };
            std::iter::repeat_n(cfg.lr.of(b) * scale, p.block(b).len())
        })
        .collect();
    let mut adam = AdamState::new(lr0.len(), cfg.adam);
    let opts = cfg.trace();
    let coords = Coords::new(blocks.clone(), p);
    let mut x = coords.get(p);
    let iters = plan.iterations;
    for it in 0..iters {
        let round = it / cfg.weights.round_iterations;
        let w = schedule_weights(&cfg.weights, round);
        let tape = Tape::new();
        let (loss, _, leaves) = evaluate_stage(&tape, bundle, p, intr, &blocks, plan.stage, target, &w, &opts)
            .map_err(|e| match e {
                Error::NonFinite { .. } => Error::Diverged { stage: plan.stage.to_string(), iteration: it },
                e => e,
            })?;
        let total = loss.total.value();
        if !total.is_finite() {
            return Err(Error::Diverged { stage: plan.stage.to_string(), iteration: it });
        }
        let row = LogRow {
            stage: plan.stage,
            iteration: it,
            total,
            terms: loss.terms.iter().map(|(n, v)| (n.to_string(), *v)).collect(),
        };
        on_iter(&row);
        log.push(row);
        let adj = tape.gradient(loss.total);
        let mut g: Vec<f64> =
            blocks.iter().flat_map(|&b| adj.wrt_all(leaves.get(b).expect("active block has leaves"))).collect();
        coords.pull_back(p, &mut g);
        let decay = 1.0 - (1.0 - cfg.final_lr_fraction) * it as f64 / iters as f64;
        let lr: Vec<f64> = lr0.iter().map(|r| r * decay).collect();
        adam.step(&mut x, &g, &lr)?;
        coords.set(p, &x);
        if blocks.contains(&Block::FineNormal) {
            p.project_normals();
            x = coords.get(p);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { stage: plan.stage.to_string(), iteration: it });
        }
    }
    Ok(())
}

/// Fit all stage plans of `cfg` to `image`.
pub fn fit(
    image: &Image,
    landmarks: Option<&[[f64; 2]]>,
    bundle: &ModelBundle,
    cfg: &FitConfig,
    init: Option<&SceneParams>,
    mut on_iter: impl FnMut(&LogRow),
) -> Result<FitResult> {
    cfg.validate()?;
    let intr = Intrinsics::square(image.width);
    if image.width != image.height {
        return Err(Error::Config("only square images are supported".into()));
    }
    let mut p = match (cfg.init, init) {
        (InitMode::Given, Some(p)) => p.clone(),
        (InitMode::Given, None) => return Err(Error::Config("init mode 'given' needs initial parameters".into())),
        (InitMode::Landmarks, _) => {
            let lm = landmarks.ok_or(Error::MissingLandmarks)?;
            initialize(bundle, intr, image, lm, cfg.roughness)?
        }
    };
    p.validate(bundle)?;
    let start = p.clone();
    let target = Target { image, landmarks };
    let mut log = Vec::new();
    let mut stages = Vec::new();
    for plan in &cfg.stages {
        run_stage(plan, cfg, bundle, intr, target, &mut p, &mut log, &mut on_iter)?;
        let (out, _) = render_params(bundle, &p, intr, plan.stage, &cfg.trace())?;
        stages.push(StageResult { stage: plan.stage, params: p.clone(), render: out.image });
    }
    Ok(FitResult { params: p, init: start, stages, log })
}

/// Texture maps and mesh of fitted parameters.
pub struct FitMaps {
    pub diffuse: Image,
    pub specular: Image,
    /// Tangent-space normals stored as raw components.
    pub normal: Image,
    pub envmap: Image,
    pub vertices: Vec<[f64; 3]>,
}

/// Evaluate the maps the fine stage renders with.
pub fn fitted_maps(bundle: &ModelBundle, p: &SceneParams, intr: Intrinsics) -> Result<FitMaps> {
    let tape = Tape::passive();
    let build = BuildOptions { stage: Stage::Fine, env: false };
    let (scene, _) = SceneVars::build(&tape, bundle, p, intr, &[], build)?;
    let maps = scene.maps.as_ref().expect("fine scene has maps");
    let res = scene.res;
    let to_img =
        |m: &[crate::scene::H3]| Image { width: res, height: res, data: m.iter().map(|h| h.map(|x| x.val)).collect() };
    let normal = Image { width: res, height: res, data: p.fine_normal.clone() };
    let basis = env_texel_basis();
    let envmap = Image {
        width: ENV_SIZE,
        height: ENV_SIZE,
        data: basis
            .iter()
            .map(|y| [0, 1, 2].map(|c| (0..NCOEF).map(|k| p.sh.coeffs[c][k] * y[k]).sum::<f64>().max(0.0)))
            .collect(),
    };
    Ok(FitMaps {
        diffuse: to_img(maps.diffuse()),
        specular: to_img(&maps.medium_specular),
        normal,
        envmap,
        vertices: scene.verts_f64.clone(),
    })
}

/// Wavefront OBJ with per-vertex uv.
pub fn write_obj(path: &Path, verts: &[[f64; 3]], uv: &[[f64; 2]], tris: &[[u32; 3]]) -> Result<()> {
    let mut s = String::new();
    for v in verts {
        let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
    }
    for t in uv {
        let _ = writeln!(s, "vt {} {}", t[0], 1.0 - t[1]);
    }
    for t in tris {
        let [a, b, c] = t.map(|i| i + 1);
        let _ = writeln!(s, "f {a}/{a} {b}/{b} {c}/{c}");
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// `iteration,stage,total,<terms...>` with one column per term name seen.
pub fn log_csv(log: &[LogRow]) -> String {
    let mut names: Vec<String> = Vec::new();
    for r in log {
        for (n, _) in &r.terms {
            if !names.contains(n) {
                names.push(n.clone());
            }
        }
    }
    let mut s = format!("iteration,stage,total,{}\n", names.join(","));
    for r in log {
        let _ = write!(s, "{},{},{:e}", r.iteration, r.stage, r.total);
        for n in &names {
            match r.terms.iter().find(|(k, _)| k == n) {
                Some((_, v)) => {
                    let _ = write!(s, ",{v:e}");
                }
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

/// Write params.json, the four maps, per-stage renders, the log and the
/// fitted mesh into `dir`; returns the file names written.
pub fn write_artifacts(dir: &Path, bundle: &ModelBundle, result: &FitResult) -> Result<Vec<String>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let mut put = |name: &str, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        f(&dir.join(name))?;
        files.push(name.to_string());
        Ok(())
    };
    let json = serde_json::to_string_pretty(&result.params).expect("params serialize");
    put("params.json", &|p| fs::write(p, &json).map_err(|e| Error::io(p, e)))?;
    let intr = Intrinsics::square(result.stages.first().map_or(1, |s| s.render.width));
    let maps = fitted_maps(bundle, &result.params, intr)?;
    put("diffuse.pfm", &|p| maps.diffuse.write(p))?;
    put("specular.pfm", &|p| maps.specular.write(p))?;
    put("normal.pfm", &|p| maps.normal.write(p))?;
    put("envmap.pfm", &|p| maps.envmap.write(p))?;
    for s in &result.stages {
        put(&format!("render_{}.pfm", s.stage), &|p| s.render.write(p))?;
        put(&format!("render_{}.png", s.stage), &|p| s.render.write(p))?;
    }
    let csv = log_csv(&result.log);
    put("fit_log.csv", &|p| fs::write(p, &csv).map_err(|e| Error::io(p, e)))?;
    put("mesh.obj", &|p| write_obj(p, &maps.vertices, &bundle.uv, &bundle.triangles))?;
    Ok(files)
}

/// Vertices in the camera frame of `p`.
pub fn camera_frame_vertices(bundle: &ModelBundle, p: &SceneParams) -> Result<Vec<[f64; 3]>> {
    let tape = Tape::passive();
    let build = BuildOptions { stage: Stage::Coarse, env: false };
    let (scene, _) = SceneVars::build(&tape, bundle, p, Intrinsics::square(1), &[], build)?;
    let cam = crate::raster::scene_camera(&scene);
    Ok(scene.verts_f64.iter().map(|&v| cam.to_camera(v).to_array()).collect())
}

/// Model-frame vertices of `p`.
pub fn model_vertices(bundle: &ModelBundle, p: &SceneParams) -> Result<Vec<[f64; 3]>> {
    let tape = Tape::passive();
    let build = BuildOptions { stage: Stage::Coarse, env: false };
    let (scene, _) = SceneVars::build(&tape, bundle, p, Intrinsics::square(1), &[], build)?;
    Ok(scene.verts_f64)
}
