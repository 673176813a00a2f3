//! Regularizer gradients against central differences, and the weight
//! schedule.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use facefit::diff::{Real, Tape, Var};
use facefit::losses::{
    atlas_texels, consistency_loss, grid_neighbors, map_softbox_loss, prior_loss, schedule_weights, smoothness_loss,
    softbox_loss, symmetry_loss, LossWeights,
};
use facefit::model::synthetic::synthetic_bundle;
use facefit::model::ModelBundle;

const H: f64 = 1e-5;

fn random_map(n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // spans the box edges so the soft box is active
    (0..n).map(|_| std::array::from_fn(|_| rng.gen_range(-0.3..1.3))).collect()
}

/// Tape gradient of `f` at `x` against central differences on sampled
/// coordinates.
fn check_map(
    x: &[[f64; 3]],
    f: impl for<'t> Fn(&'t Tape, &[[Var<'t>; 3]]) -> Var<'t>,
    f64f: impl Fn(&[[f64; 3]]) -> f64,
) {
    let tape = Tape::new();
    let vars: Vec<[Var<'_>; 3]> = x.iter().map(|v| v.map(|c| tape.leaf(c))).collect();
    let out = f(&tape, &vars);
    assert!((out.value() - f64f(x)).abs() <= 1e-12 * f64f(x).abs().max(1.0));
    let adj = tape.gradient(out);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..40 {
        let (t, c) = (rng.gen_range(0..x.len()), rng.gen_range(0..3));
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[t][c] += H;
        xm[t][c] -= H;
        let fd = (f64f(&xp) - f64f(&xm)) / (2.0 * H);
        let an = adj.wrt(vars[t][c].handle());
        assert!((an - fd).abs() <= 1e-6 * an.abs().max(fd.abs()).max(1e-3), "texel {t} channel {c}: {an} vs {fd}");
    }
}

fn bundle() -> ModelBundle {
    synthetic_bundle(16)
}

#[test]
fn symmetry_gradient() {
    let b = bundle();
    let tex = atlas_texels(&b);
    let x = random_map(b.texture_resolution.pow(2), 1);
    check_map(&x, |t, v| symmetry_loss(t.constant(0.0), v, &b, &tex), |m| symmetry_loss(0.0, m, &b, &tex));
}

#[test]
fn consistency_gradient() {
    let b = bundle();
    let tex = atlas_texels(&b);
    let n = b.texture_resolution.pow(2);
    let base = random_map(n, 2);
    let x = random_map(n, 3);
    check_map(
        &x,
        |t, v| {
            let bv: Vec<[Var<'_>; 3]> = base.iter().map(|p| p.map(|c| t.constant(c))).collect();
            consistency_loss(t.constant(0.0), v, &bv, &tex).unwrap()
        },
        |m| consistency_loss(0.0, m, &base, &tex).unwrap(),
    );
}

#[test]
fn smoothness_and_box_gradients() {
    let b = bundle();
    let tex = atlas_texels(&b);
    let nb = grid_neighbors(b.texture_resolution);
    let x = random_map(b.texture_resolution.pow(2), 4);
    check_map(&x, |t, v| smoothness_loss(t.constant(0.0), v, &nb, &tex), |m| smoothness_loss(0.0, m, &nb, &tex));
    check_map(&x, |t, v| map_softbox_loss(t.constant(0.0), v, &tex), |m| map_softbox_loss(0.0, m, &tex));
}

#[test]
fn prior_gradient_is_two_x_over_variance() {
    let b = bundle();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let alpha: Vec<f64> = (0..b.prior_var_shape.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let beta: Vec<f64> = (0..b.prior_var_refl.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let tape = Tape::new();
    let av: Vec<Var<'_>> = alpha.iter().map(|&a| tape.leaf(a)).collect();
    let bv: Vec<Var<'_>> = beta.iter().map(|&a| tape.leaf(a)).collect();
    let out = prior_loss(tape.constant(0.0), &av, &bv, &b);
    let adj = tape.gradient(out);
    for (v, (x, var)) in av.iter().zip(alpha.iter().zip(&b.prior_var_shape)) {
        assert!((adj.wrt(v.handle()) - 2.0 * x / var).abs() < 1e-12 * (x / var).abs().max(1.0));
    }
    for (v, (x, var)) in bv.iter().zip(beta.iter().zip(&b.prior_var_refl)) {
        assert!((adj.wrt(v.handle()) - 2.0 * x / var).abs() < 1e-12 * (x / var).abs().max(1.0));
    }
}

#[test]
fn softbox_values() {
    assert_eq!(softbox_loss(0.0, &[0.0, 0.5, 1.0]), 0.0);
    assert!((softbox_loss(0.0, &[-0.5, 1.25]) - (0.25 + 0.0625)).abs() < 1e-15);
}

#[test]
fn mirrored_map_has_zero_symmetry_loss() {
    let b = bundle();
    let tex = atlas_texels(&b);
    let mut m = random_map(b.texture_resolution.pow(2), 6);
    for &t in &tex {
        let k = b.texel_mirror(t);
        if t < k {
            m[k] = m[t];
        }
    }
    assert!(symmetry_loss(0.0, &m, &b, &tex) < 1e-15);
}

proptest! {
    #[test]
    fn schedule_halves_only_consistency(round in 0usize..8, factor in 1.0f64..4.0) {
        let w = LossWeights { halving_factor: factor, ..LossWeights::default() };
        let s = schedule_weights(&w, round);
        let k = factor.powi(round as i32);
        prop_assert!((s.w_c_diffuse * k - w.w_c_diffuse).abs() < 1e-12);
        prop_assert!((s.w_c_fine * k - w.w_c_fine).abs() < 1e-12);
        prop_assert_eq!(LossWeights { w_c_diffuse: w.w_c_diffuse, w_c_fine: w.w_c_fine, ..s.clone() }, w.clone());
        let next = schedule_weights(&w, round + 1);
        prop_assert!(next.w_c_diffuse <= s.w_c_diffuse);
    }
}
