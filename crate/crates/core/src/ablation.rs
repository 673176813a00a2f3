//! Controlled experiments on synthetic fixtures: hybrid loss vs ray tracing
//! only, and shading leakage with and without the map regularizers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fit::{camera_frame_vertices, fit, FitConfig, InitMode, StagePlan};
use crate::fixtures::{face_fixture, fixture_from, Fixture, FixtureOptions};
use crate::losses::atlas_texels;
use crate::metrics::{vertex_position_error, MetricReport};
use crate::model::eval_geometry;
use crate::model::SceneParams;
use crate::scene::Stage;
use crate::sh::ConvolvedKernels;
use crate::shading::shade_diffuse;
use crate::trace::TraceOptions;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationOptions {
    pub seeds: Vec<u64>,
    pub size: usize,
    pub grid: usize,
    pub spp: usize,
    pub iterations: usize,
    /// Added to the true translation of the starting point.
    pub trans_offset: [f64; 3],
    /// Added to the true rotation of the starting point, radians.
    pub rot_offset: [f64; 3],
    /// Standard deviation of the landmark noise, pixels.
    pub landmark_noise: f64,
}

impl Default for AblationOptions {
    fn default() -> Self {
        AblationOptions {
            seeds: vec![1, 2, 3, 4, 5],
            size: 64,
            grid: 32,
            spp: 4,
            iterations: 150,
            trans_offset: [6.0, -5.0, 30.0],
            rot_offset: [0.03, -0.04, 0.02],
            landmark_noise: 1.0,
        }
    }
}

/// Mean and population standard deviation over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub name: String,
    pub w_dr: f64,
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl ArmSummary {
    fn new(name: &str, w_dr: f64, per_seed: Vec<f64>) -> Self {
        let n = per_seed.len() as f64;
        let mean = per_seed.iter().sum::<f64>() / n;
        let std = (per_seed.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        ArmSummary { name: name.into(), w_dr, per_seed, mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    /// Mean camera-frame vertex error at the starting point.
    pub start_error: Vec<f64>,
    pub hybrid: ArmSummary,
    pub ray_only: ArmSummary,
}

/// Coarse fixture, noisy landmarks and a starting point off the truth.
pub fn offset_fixture(opts: &AblationOptions, seed: u64) -> Result<(Fixture, Vec<[f64; 2]>, SceneParams)> {
    let fx = face_fixture(&FixtureOptions {
        grid: opts.grid,
        size: opts.size,
        spp: opts.spp,
        seed,
        detail: false,
        ..Default::default()
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let noise = Normal::new(0.0, opts.landmark_noise.max(0.0)).expect("finite sigma");
    let landmarks =
        fx.landmarks.iter().map(|l| [l[0] + noise.sample(&mut rng), l[1] + noise.sample(&mut rng)]).collect();
    let mut init = fx.truth.clone();
    init.alpha.iter_mut().for_each(|a| *a = 0.0);
    init.delta.iter_mut().for_each(|d| *d = 0.0);
    init.beta.iter_mut().for_each(|b| *b = 0.0);
    for k in 0..3 {
        init.rot[k] += opts.rot_offset[k];
        init.trans[k] += opts.trans_offset[k];
    }
    Ok((fx, landmarks, init))
}

fn coarse_config(opts: &AblationOptions, w_dr: f64, seed: u64) -> FitConfig {
    let mut cfg = FitConfig {
        stages: vec![StagePlan::coarse(opts.iterations)],
        spp: opts.spp,
        seed,
        init: InitMode::Given,
        ..Default::default()
    };
    cfg.weights.w_dr = w_dr;
    cfg
}

/// Coarse fits from the offset start with the vertex term on
/// (`w_dr = 0.5`) and off, scored by mean camera-frame vertex error.
pub fn hybrid_ablation(opts: &AblationOptions) -> Result<AblationReport> {
    let mut start = Vec::new();
    let (mut hybrid, mut ray) = (Vec::new(), Vec::new());
    for &seed in &opts.seeds {
        let (fx, lm, init) = offset_fixture(opts, seed)?;
        let gt = camera_frame_vertices(&fx.bundle, &fx.truth)?;
        let err = |p: &SceneParams| -> Result<f64> {
            Ok(vertex_position_error(&camera_frame_vertices(&fx.bundle, p)?, &gt, None)?.mean)
        };
        start.push(err(&init)?);
        for (w_dr, out) in [(0.5, &mut hybrid), (0.0, &mut ray)] {
            let r = fit(&fx.image, Some(&lm), &fx.bundle, &coarse_config(opts, w_dr, seed), Some(&init), |_| {})?;
            out.push(err(&r.params)?);
        }
    }
    Ok(AblationReport {
        seeds: opts.seeds.clone(),
        start_error: start,
        hybrid: ArmSummary::new("hybrid", 0.5, hybrid),
        ray_only: ArmSummary::new("ray_only", 0.0, ray),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeakageOptions {
    pub seed: u64,
    pub size: usize,
    pub grid: usize,
    pub spp: usize,
    pub iterations: usize,
    /// Diffuse increment per unit of centered shading baked into the target.
    pub bake: f64,
}

impl Default for LeakageOptions {
    fn default() -> Self {
        LeakageOptions { seed: 3, size: 64, grid: 32, spp: 4, iterations: 150, bake: 0.3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    /// Correlation with symmetry and consistency enabled.
    pub regularized: f64,
    /// Correlation with both weights set to zero.
    pub unregularized: f64,
    pub texels: usize,
}

/// Diffuse shading (unit albedo, first channel) at every atlas texel.
pub fn texel_shading(fx: &Fixture, p: &SceneParams) -> Result<Vec<(usize, f64)>> {
    let mesh = eval_geometry(&fx.bundle, &p.alpha, &p.delta)?;
    let k = ConvolvedKernels::new(p.roughness)?;
    let mut out = Vec::new();
    for t in atlas_texels(&fx.bundle) {
        let (tri, bary) = fx.bundle.texel_hit(t).expect("atlas texel");
        let ids = fx.bundle.triangles[tri as usize];
        let mut n = [0.0; 3];
        for (w, &i) in bary.iter().zip(&ids) {
            for c in 0..3 {
                n[c] += w * mesh.normals[i as usize][c];
            }
        }
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        out.push((t, shade_diffuse(&p.sh, &k, n.map(|c| c / len), [1.0; 3])[0]));
    }
    Ok(out)
}

/// Pearson correlation; zero when either side is constant.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Target whose medium diffuse map carries the true shading; the fit
/// starts from the true coarse parameters and trains the medium maps.
pub fn leakage_fixture(opts: &LeakageOptions) -> Result<(Fixture, Vec<(usize, f64)>)> {
    let base = face_fixture(&FixtureOptions {
        grid: opts.grid,
        size: opts.size,
        spp: opts.spp,
        seed: opts.seed,
        detail: false,
        ..Default::default()
    })?;
    let shading = texel_shading(&base, &base.truth)?;
    let mean = shading.iter().map(|s| s.1).sum::<f64>() / shading.len() as f64;
    let mut truth = base.truth.clone();
    for &(t, s) in &shading {
        truth.medium_diffuse_inc[t] = [opts.bake * (s - mean); 3];
    }
    let fx = fixture_from(base.bundle, truth, opts.size, Stage::Medium, TraceOptions::new(opts.spp, opts.seed))?;
    Ok((fx, shading))
}

/// Correlation between the fitted diffuse increment and the true shading,
/// with E_s + E_c on and off.
pub fn leakage_experiment(opts: &LeakageOptions) -> Result<LeakageReport> {
    let (fx, shading) = leakage_fixture(opts)?;
    let mut init = fx.truth.clone();
    init.medium_diffuse_inc.iter_mut().for_each(|t| *t = [0.0; 3]);
    let s: Vec<f64> = shading.iter().map(|x| x.1).collect();
    let mut corr = [0.0; 2];
    for (k, on) in [true, false].into_iter().enumerate() {
        let mut cfg = FitConfig {
            stages: vec![StagePlan::medium(opts.iterations, false)],
            spp: opts.spp,
            seed: opts.seed,
            init: InitMode::Given,
            ..Default::default()
        };
        if !on {
            let w = &mut cfg.weights;
            w.w_s = 0.0;
            w.w_c_diffuse = 0.0;
            w.w_c_specular = 0.0;
        }
        let r = fit(&fx.image, Some(&fx.landmarks), &fx.bundle, &cfg, Some(&init), |_| {})?;
        let inc: Vec<f64> =
            shading.iter().map(|&(t, _)| r.params.medium_diffuse_inc[t].iter().sum::<f64>() / 3.0).collect();
        corr[k] = correlation(&inc, &s);
    }
    Ok(LeakageReport { regularized: corr[0], unregularized: corr[1], texels: s.len() })
}

/// Mean camera-frame vertex error of `p` against the fixture's truth.
pub fn vertex_error(fx: &Fixture, p: &SceneParams) -> Result<MetricReport> {
    vertex_position_error(&camera_frame_vertices(&fx.bundle, p)?, &camera_frame_vertices(&fx.bundle, &fx.truth)?, None)
}
