use proptest::prelude::*;

use facefit::diff::Tape;
use facefit::fit::{fit, run_stage, AdamConfig, AdamState, FitConfig, InitMode, StagePlan};
use facefit::fixtures::{face_fixture, Fixture, FixtureOptions};
use facefit::losses::{evaluate_stage, stage_blocks, LossWeights, Target};
use facefit::model::Block;
use facefit::scene::Stage;

fn small() -> Fixture {
    face_fixture(&FixtureOptions { grid: 16, size: 32, spp: 2, seed: 4, detail: false, ..Default::default() }).unwrap()
}

fn adam_oracle(x: f64, grads: &[f64], lr: f64, b1: f64, b2: f64, eps: f64) -> f64 {
    let (mut m, mut v, mut x) = (0.0, 0.0, x);
    for (t, g) in grads.iter().enumerate() {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let t = (t + 1) as i32;
        x -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
    }
    x
}

proptest! {
    #[test]
    fn adam_matches_scalar_recurrence(x0 in -5.0f64..5.0, grads in prop::collection::vec(-3.0f64..3.0, 1..20), lr in 1e-4f64..0.5) {
        let cfg = AdamConfig::default();
        let mut s = AdamState::new(1, cfg);
        let mut x = [x0];
        for g in &grads {
            s.step(&mut x, &[*g], &[lr]).unwrap();
        }
        let want = adam_oracle(x0, &grads, lr, cfg.beta1, cfg.beta2, cfg.eps);
        prop_assert!((x[0] - want).abs() <= 1e-12 * want.abs().max(1.0));
    }
}

#[test]
fn adam_minimizes_a_quadratic() {
    let mut s = AdamState::new(2, AdamConfig::default());
    let mut x = [3.0, -2.0];
    for _ in 0..2000 {
        let g = [2.0 * x[0], 2.0 * x[1]];
        s.step(&mut x, &g, &[0.05, 0.05]).unwrap();
    }
    assert!(x[0].abs() < 1e-3 && x[1].abs() < 1e-3, "{x:?}");
    assert!(s.step(&mut x, &[0.0], &[0.1]).is_err());
}

#[test]
fn total_is_sum_of_terms() {
    let fx = small();
    for w in [LossWeights::default(), LossWeights::literal()] {
        for stage in Stage::ALL {
            let tape = Tape::new();
            let target = Target { image: &fx.image, landmarks: Some(&fx.landmarks) };
            let (loss, _, _) = evaluate_stage(
                &tape,
                &fx.bundle,
                &fx.truth,
                fx.intr,
                &stage_blocks(stage),
                stage,
                target,
                &w,
                &fx.trace,
            )
            .unwrap();
            let sum: f64 = loss.terms.iter().map(|t| t.1).sum();
            let total = facefit::diff::Real::value(&loss.total);
            assert!((total - sum).abs() <= 1e-12 * total.abs(), "{stage}: {total} vs {sum}");
            assert!(loss.terms.iter().all(|t| t.1 >= 0.0));
        }
    }
}

fn term(fx: &Fixture, stage: Stage, w: &LossWeights, name: &str) -> f64 {
    let tape = Tape::passive();
    let target = Target { image: &fx.image, landmarks: Some(&fx.landmarks) };
    let (loss, _, _) = evaluate_stage(&tape, &fx.bundle, &fx.truth, fx.intr, &[], stage, target, w, &fx.trace).unwrap();
    loss.terms.iter().find(|t| t.0 == name).map_or(0.0, |t| t.1)
}

#[test]
fn terms_scale_linearly_with_weights() {
    let mut fx = small();
    // move pose and maps off the truth so every term is non-zero
    fx.truth.trans[1] += 1.5;
    for (k, v) in fx.truth.medium_diffuse_inc.iter_mut().enumerate() {
        *v = [0.01 * (k % 7) as f64, -0.02, 0.03];
    }
    let w = LossWeights::default();
    type Scale = fn(&mut LossWeights, f64);
    let cases: [(&str, Scale); 4] = [
        ("symmetry", |w, k| w.w_s *= k),
        ("smoothness", |w, k| w.w_m *= k),
        ("landmarks", |w, k| w.w_lm *= k),
        ("photo_vertex", |w, k| w.w_dr *= k),
    ];
    for (name, scale) in cases {
        let base = term(&fx, Stage::Medium, &w, name);
        assert!(base > 0.0, "{name}");
        let mut w3 = w.clone();
        scale(&mut w3, 3.0);
        let t3 = term(&fx, Stage::Medium, &w3, name);
        assert!((t3 - 3.0 * base).abs() <= 1e-12 * t3, "{name}: {t3} vs 3 × {base}");
    }
    let per_pixel = term(&fx, Stage::Coarse, &w, "photo_ray");
    let sum = term(&fx, Stage::Coarse, &LossWeights::literal(), "photo_ray");
    assert!((sum / per_pixel - (32.0 * 32.0)).abs() < 1e-6);
}

#[test]
fn frozen_blocks_stay_bit_identical() {
    let fx = small();
    let cfg = FitConfig { spp: 1, ..Default::default() };
    let target = Target { image: &fx.image, landmarks: Some(&fx.landmarks) };
    for plan in [StagePlan::coarse(3), StagePlan::medium(3, true), StagePlan::fine(3)] {
        let mut p = fx.truth.clone();
        // off the optimum so every active block receives a gradient
        p.trans[0] += 2.0;
        let before = p.clone();
        let mut log = Vec::new();
        run_stage(&plan, &cfg, &fx.bundle, fx.intr, target, &mut p, &mut log, |_| {}).unwrap();
        assert_eq!(log.len(), 3);
        for b in Block::ALL {
            let same = p.block(b) == before.block(b);
            if plan.active().contains(&b) {
                assert!(!same || b == Block::Delta, "{} stage: {} did not move", plan.stage, b.name());
            } else {
                assert!(same, "{} stage: frozen {} moved", plan.stage, b.name());
            }
        }
    }
}

fn short_config(init: InitMode) -> FitConfig {
    FitConfig {
        spp: 1,
        stages: vec![StagePlan::coarse(30), StagePlan::medium(4, true), StagePlan::fine(4)],
        init,
        ..Default::default()
    }
}

#[test]
fn fit_is_deterministic() {
    let fx = small();
    let cfg = short_config(InitMode::Landmarks);
    let a = fit(&fx.image, Some(&fx.landmarks), &fx.bundle, &cfg, None, |_| {}).unwrap();
    let b = fit(&fx.image, Some(&fx.landmarks), &fx.bundle, &cfg, None, |_| {}).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.log, b.log);
    assert_eq!(a.stages.len(), 3);
}

#[test]
fn coarse_loss_decreases() {
    let fx = small();
    let a = fit(&fx.image, Some(&fx.landmarks), &fx.bundle, &short_config(InitMode::Landmarks), None, |_| {}).unwrap();
    let coarse: Vec<f64> = a.log.iter().filter(|r| r.stage == Stage::Coarse).map(|r| r.total).collect();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    assert!(mean(&coarse[20..]) < mean(&coarse[..10]), "{coarse:?}");
}

#[test]
fn given_init_needs_parameters() {
    let fx = small();
    let cfg = short_config(InitMode::Given);
    assert!(fit(&fx.image, None, &fx.bundle, &cfg, None, |_| {}).is_err());
    let lm_cfg = short_config(InitMode::Landmarks);
    assert!(fit(&fx.image, None, &fx.bundle, &lm_cfg, None, |_| {}).is_err());
}
