use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use facefit::ablation::{hybrid_ablation, leakage_experiment, AblationOptions, LeakageOptions};
use facefit::diff::gradcheck::{check_sampled, CheckOptions, GradReport, Verdict};
use facefit::fit::{fit, model_vertices, write_artifacts, write_obj, FitConfig};
use facefit::fixtures::{face_fixture, gradcheck_point, render_params, FixtureOptions};
use facefit::image::{write_mask_png, Image};
use facefit::losses::{stage_blocks, StageObjective, Target};
use facefit::metrics::{normal_angular_error, photometric_rmse, ssim, vertex_position_error, MetricReport};
use facefit::model::{load_bundle, Intrinsics, SceneParams};
use facefit::raster::{read_landmarks, write_landmarks};
use facefit::scene::Stage;
use facefit::trace::TraceOptions;
use facefit::{Error, Result};

use crate::manifest::{self, Manifest};
use crate::{Cli, Command};

pub enum Status {
    Ok,
    CheckFailed(String),
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum AblationKind {
    /// Vertex error with and without the vertex-based term.
    Hybrid,
    /// Shading leakage with and without symmetry and consistency.
    Leakage,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub stage: Stage,
    pub size: usize,
    pub spp: usize,
    pub seed: u64,
    /// Closed-form shading without visibility instead of ray tracing.
    pub analytic: bool,
    pub shadows: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { stage: Stage::Fine, size: 128, spp: 8, seed: 1, analytic: false, shadows: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub fixture: FixtureOptions,
    /// Seed of the perturbation that moves the evaluation point off the truth.
    pub point_seed: u64,
    pub sample_seed: u64,
    pub coords: usize,
    pub stages: Vec<Stage>,
    pub step: f64,
    pub threshold: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            fixture: FixtureOptions { grid: 24, size: 32, spp: 4, seed: 3, ..Default::default() },
            point_seed: 5,
            sample_seed: 11,
            coords: 64,
            stages: Stage::ALL.to_vec(),
            step: 1e-4,
            threshold: 1e-4,
        }
    }
}

#[derive(Serialize)]
struct StageCheck {
    stage: Stage,
    report: GradReport,
}

fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), read_json)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    serde_json::from_str(&text).map_err(|e| Error::Format { path: path.into(), msg: e.to_string() })
}

fn write_text(dir: &Path, name: &str, text: &str, files: &mut Vec<String>) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, text).map_err(|e| Error::Io { path: p, source: e })?;
    files.push(name.into());
    Ok(())
}

fn write_json(dir: &Path, name: &str, v: &impl Serialize, files: &mut Vec<String>) -> Result<()> {
    write_text(dir, name, &serde_json::to_string_pretty(v).expect("serializable"), files)
}

fn write_image(dir: &Path, name: &str, img: &Image, files: &mut Vec<String>) -> Result<()> {
    img.write(&dir.join(name))?;
    files.push(name.into());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<Status> {
    let g = &cli.global;
    if g.deterministic {
        // a second call fails harmlessly when the pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    }
    fs::create_dir_all(&g.out).map_err(|e| Error::Io { path: g.out.clone(), source: e })?;
    let t0 = Instant::now();
    let cfg_path = g.config.as_deref();
    let mut files = Vec::new();
    let out = g.out.as_path();
    let (name, config, seed, status) = match &cli.command {
        Command::MakeFixture => {
            let mut o: FixtureOptions = load(cfg_path)?;
            o.seed = g.seed.unwrap_or(o.seed);
            o.spp = g.spp.unwrap_or(o.spp);
            let fx = face_fixture(&o)?;
            let bdir = out.join("bundle");
            fx.bundle.save(&bdir)?;
            let mut names: Vec<String> = fs::read_dir(&bdir)
                .map_err(|e| Error::Io { path: bdir.clone(), source: e })?
                .filter_map(|e| e.ok())
                .map(|e| format!("bundle/{}", e.file_name().to_string_lossy()))
                .collect();
            names.sort();
            files.extend(names);
            write_image(out, "target.pfm", &fx.image, &mut files)?;
            write_image(out, "target.png", &fx.image, &mut files)?;
            write_landmarks(&out.join("landmarks.txt"), &fx.landmarks)?;
            files.push("landmarks.txt".into());
            write_json(out, "truth.json", &fx.truth, &mut files)?;
            let verts = model_vertices(&fx.bundle, &fx.truth)?;
            write_obj(&out.join("truth_mesh.obj"), &verts, &fx.bundle.uv, &fx.bundle.triangles)?;
            files.push("truth_mesh.obj".into());
            ("make-fixture", serde_json::to_value(&o), o.seed, Status::Ok)
        }
        Command::Render { bundle, params } => {
            let mut c: RenderConfig = load(cfg_path)?;
            c.seed = g.seed.unwrap_or(c.seed);
            c.spp = g.spp.unwrap_or(c.spp);
            let b = load_bundle(bundle)?;
            let p: SceneParams = read_json(params)?;
            p.validate(&b)?;
            let trace = if c.analytic {
                TraceOptions::analytic()
            } else {
                TraceOptions { shadows: c.shadows, ..TraceOptions::new(c.spp, c.seed) }
            };
            let (r, lm) = render_params(&b, &p, Intrinsics::square(c.size), c.stage, &trace)?;
            write_image(out, "render.pfm", &r.image, &mut files)?;
            write_image(out, "render.png", &r.image, &mut files)?;
            write_mask_png(&out.join("coverage.png"), c.size, c.size, &r.coverage())?;
            files.push("coverage.png".into());
            write_landmarks(&out.join("landmarks.txt"), &lm)?;
            files.push("landmarks.txt".into());
            ("render", serde_json::to_value(&c), c.seed, Status::Ok)
        }
        Command::Fit { bundle, image, landmarks, init } => {
            let mut c: FitConfig = load(cfg_path)?;
            c.seed = g.seed.unwrap_or(c.seed);
            c.spp = g.spp.unwrap_or(c.spp);
            let b = load_bundle(bundle)?;
            let img = Image::read(image)?;
            let lm = landmarks.as_deref().map(read_landmarks).transpose()?;
            let init = init.as_deref().map(read_json::<SceneParams>).transpose()?;
            let r = fit(&img, lm.as_deref(), &b, &c, init.as_ref(), |row| {
                if row.iteration % 50 == 0 {
                    eprintln!("{} {:>4} loss {:.6}", row.stage, row.iteration, row.total);
                }
            })?;
            files.extend(write_artifacts(out, &b, &r)?);
            ("fit", serde_json::to_value(&c), c.seed, Status::Ok)
        }
        Command::Gradcheck => {
            let mut c: GradcheckConfig = load(cfg_path)?;
            c.fixture.seed = g.seed.unwrap_or(c.fixture.seed);
            c.fixture.spp = g.spp.unwrap_or(c.fixture.spp);
            let fx = face_fixture(&c.fixture)?;
            let (params, target) = gradcheck_point(&fx, c.point_seed);
            let opts = CheckOptions { step: c.step, threshold: c.threshold, ..Default::default() };
            let mut checks = Vec::new();
            for &stage in &c.stages {
                let obj = StageObjective {
                    bundle: &fx.bundle,
                    params: params.clone(),
                    intr: fx.intr,
                    stage,
                    blocks: stage_blocks(stage),
                    target: Target { image: &target, landmarks: Some(&fx.landmarks) },
                    weights: Default::default(),
                    trace: fx.trace,
                };
                let report = check_sampled(&obj, &obj.point(), c.coords, c.sample_seed, opts)?;
                println!(
                    "{:<7} {:>3} pass {:>3} fail {:>3} discontinuous  max rel {:.2e}",
                    stage.to_string(),
                    report.count(Verdict::Pass),
                    report.count(Verdict::Fail),
                    report.count(Verdict::Discontinuous),
                    report.max_rel_error()
                );
                checks.push(StageCheck { stage, report });
            }
            write_json(out, "gradcheck.json", &checks, &mut files)?;
            let failed: usize = checks.iter().map(|s| s.report.count(Verdict::Fail)).sum();
            let status = if failed == 0 {
                Status::Ok
            } else {
                Status::CheckFailed(format!("{failed} coordinates above threshold {}", c.threshold))
            };
            ("gradcheck", serde_json::to_value(&c), c.fixture.seed, status)
        }
        Command::Ablation { kind } => match kind {
            AblationKind::Hybrid => {
                let mut c: AblationOptions = load(cfg_path)?;
                if let Some(s) = g.seed {
                    let n = c.seeds.len() as u64;
                    c.seeds = (s..s + n).collect();
                }
                c.spp = g.spp.unwrap_or(c.spp);
                let r = hybrid_ablation(&c)?;
                for a in [&r.hybrid, &r.ray_only] {
                    println!("{:<9} w_dr {:<4} vertex error {:.4} ± {:.4}", a.name, a.w_dr, a.mean, a.std);
                }
                write_json(out, "ablation.json", &r, &mut files)?;
                let status = if r.hybrid.mean <= r.ray_only.mean {
                    Status::Ok
                } else {
                    Status::CheckFailed("hybrid error above ray-only error".into())
                };
                ("ablation", serde_json::to_value(&c), c.seeds.first().copied().unwrap_or(0), status)
            }
            AblationKind::Leakage => {
                let mut c: LeakageOptions = load(cfg_path)?;
                c.seed = g.seed.unwrap_or(c.seed);
                c.spp = g.spp.unwrap_or(c.spp);
                let r = leakage_experiment(&c)?;
                println!("leakage correlation: {:.4} regularized, {:.4} unregularized", r.regularized, r.unregularized);
                write_json(out, "leakage.json", &r, &mut files)?;
                let status = if r.regularized < r.unregularized {
                    Status::Ok
                } else {
                    Status::CheckFailed("regularizers did not reduce leakage".into())
                };
                ("ablation", serde_json::to_value(&c), c.seed, status)
            }
        },
        Command::Metrics { pred, gt, normals, mask } => {
            let reports = metrics(pred, gt, *normals, mask.as_deref())?;
            for (name, r) in &reports {
                println!("{}", r.table_row(name));
            }
            let map: serde_json::Map<String, serde_json::Value> =
                reports.iter().map(|(k, v)| (k.clone(), serde_json::to_value(v).expect("serializable"))).collect();
            write_json(out, "metrics.json", &map, &mut files)?;
            ("metrics", Ok(serde_json::json!({ "normals": normals })), 0, Status::Ok)
        }
    };
    let config = config.expect("configs serialize");
    let m = Manifest {
        command: name.into(),
        version: env!("CARGO_PKG_VERSION"),
        config_hash: manifest::config_hash(&config),
        config,
        seed,
        deterministic: g.deterministic,
        artifacts: Vec::new(),
        elapsed_seconds: (!g.deterministic).then(|| t0.elapsed().as_secs_f64()),
    };
    manifest::write(out, m, &files)?;
    Ok(status)
}

fn read_obj_vertices(path: &Path) -> Result<Vec<[f64; 3]>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        if it.next() != Some("v") {
            continue;
        }
        let v: Vec<f64> = it
            .take(3)
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format { path: path.into(), msg: format!("line {}: {e}", n + 1) })?;
        if v.len() != 3 {
            return Err(Error::Format {
                path: path.into(),
                msg: format!("line {}: vertex needs three coordinates", n + 1),
            });
        }
        out.push([v[0], v[1], v[2]]);
    }
    Ok(out)
}

fn metrics(pred: &Path, gt: &Path, normals: bool, mask: Option<&Path>) -> Result<Vec<(String, MetricReport)>> {
    let is_obj = |p: &Path| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("obj"));
    if is_obj(pred) && is_obj(gt) {
        let r = vertex_position_error(&read_obj_vertices(pred)?, &read_obj_vertices(gt)?, None)?;
        return Ok(vec![("vertex_error".into(), r)]);
    }
    let (a, b) = (Image::read(pred)?, Image::read(gt)?);
    if !a.same_size(&b) {
        return Err(Error::ImageSize { module: "metrics", expected: (b.width, b.height), found: (a.width, a.height) });
    }
    let mask: Option<Vec<bool>> = match mask {
        Some(p) => {
            let m = Image::read(p)?;
            if !m.same_size(&a) {
                return Err(Error::ImageSize {
                    module: "metrics",
                    expected: (a.width, a.height),
                    found: (m.width, m.height),
                });
            }
            Some(m.data.iter().map(|px| px[0] > 0.5).collect())
        }
        None => None,
    };
    let single = |v: f64| MetricReport { mean: v, std: 0.0, count: 1, thresholds: Vec::new(), renormalized: 0 };
    if normals {
        // pixels where either field is zero carry no normal
        let m: Vec<bool> = (0..a.len())
            .map(|k| {
                let nz = |px: [f64; 3]| px.iter().any(|&c| c != 0.0);
                mask.as_ref().is_none_or(|m| m[k]) && nz(a.data[k]) && nz(b.data[k])
            })
            .collect();
        return Ok(vec![("normal_angle_deg".into(), normal_angular_error(&a.data, &b.data, &m)?)]);
    }
    Ok(vec![
        ("rmse".into(), single(photometric_rmse(&a, &b, mask.as_deref())?)),
        ("ssim".into(), single(ssim(&a, &b)?)),
    ])
}
