//! Central finite-difference gradient checking.
//!
//! The objective is evaluated once on a recording tape for the analytic
//! gradient and twice per checked coordinate on passive tapes. Any random
//! sampling inside the objective must be keyed by fixed seeds so that the
//! perturbed evaluations see the same noise. A coordinate whose perturbation
//! changes the branch signature (coverage, hit triangle, visibility, a kink)
//! is reported as discontinuous instead of being compared.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Handle, Real, Tape, Var};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Discontinuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordResult {
    pub coordinate: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub value: f64,
    pub step: f64,
    pub threshold: f64,
    pub coords: Vec<CoordResult>,
}

impl GradReport {
    /// True when no compared coordinate failed.
    pub fn passed(&self) -> bool {
        self.coords.iter().all(|c| c.verdict != Verdict::Fail)
    }

    /// Largest relative error over compared coordinates.
    pub fn max_rel_error(&self) -> f64 {
        self.coords.iter().filter(|c| c.verdict != Verdict::Discontinuous).map(|c| c.rel_error).fold(0.0, f64::max)
    }

    pub fn count(&self, v: Verdict) -> usize {
        self.coords.iter().filter(|c| c.verdict == v).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckOptions {
    pub step: f64,
    pub threshold: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { step: 1e-4, threshold: 1e-4, floor: 1e-6 }
    }
}

/// `|a − n| / max(|a|, |n|, floor)`, zero when both vanish.
pub fn rel_error(a: f64, n: f64, floor: f64) -> f64 {
    let d = (a - n).abs();
    if d == 0.0 {
        return 0.0;
    }
    d / a.abs().max(n.abs()).max(floor)
}

/// A scalar function of a flat parameter vector.
pub trait Objective {
    /// Label of coordinate `i` (the block it belongs to).
    fn label(&self, i: usize) -> String;

    /// Evaluate at `x`, returning the output and one leaf handle per entry
    /// of `x` (in order) on recording tapes.
    fn eval<'t>(&self, tape: &'t Tape, x: &[f64]) -> Result<(Var<'t>, Vec<Handle>)>;
}

fn passive_eval(f: &impl Objective, x: &[f64]) -> Result<(f64, u64)> {
    let tape = Tape::passive();
    let (v, _) = f.eval(&tape, x)?;
    Ok((v.value(), tape.branch_signature()))
}

/// Analytic gradient at `x` with the recorded value and branch signature.
pub fn analytic_gradient(f: &impl Objective, x: &[f64]) -> Result<(f64, u64, Vec<f64>)> {
    let tape = Tape::new();
    let (v, leaves) = f.eval(&tape, x)?;
    let adj = tape.gradient(v);
    Ok((v.value(), tape.branch_signature(), adj.wrt_all(&leaves)))
}

/// Check `coords` of `f` at `x`.
pub fn check_gradients(f: &impl Objective, x: &[f64], coords: &[usize], opts: CheckOptions) -> Result<GradReport> {
    let (value, sig0, grad) = analytic_gradient(f, x)?;
    check_with_gradient(f, x, coords, opts, value, sig0, &grad)
}

fn check_with_gradient(
    f: &impl Objective,
    x: &[f64],
    coords: &[usize],
    opts: CheckOptions,
    value: f64,
    sig0: u64,
    grad: &[f64],
) -> Result<GradReport> {
    let h = opts.step;
    let mut out = Vec::with_capacity(coords.len());
    let mut xp = x.to_vec();
    for &i in coords {
        xp[i] = x[i] + h;
        let (fp, sp) = passive_eval(f, &xp)?;
        xp[i] = x[i] - h;
        let (fm, sm) = passive_eval(f, &xp)?;
        xp[i] = x[i];
        let numeric = (fp - fm) / (2.0 * h);
        let analytic = grad[i];
        let rel = rel_error(analytic, numeric, opts.floor);
        let verdict = if sp != sig0 || sm != sig0 {
            Verdict::Discontinuous
        } else if rel < opts.threshold {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        out.push(CoordResult { coordinate: f.label(i), index: i, analytic, numeric, rel_error: rel, verdict });
    }
    Ok(GradReport { value, step: h, threshold: opts.threshold, coords: out })
}

/// Sample `n` coordinates spread over the labelled blocks and check them.
///
/// Blocks are visited round-robin; inside a block an index is drawn among
/// the coordinates the output depends on (nonzero analytic partial), or
/// among all of them when there are none.
pub fn check_sampled(f: &impl Objective, x: &[f64], n: usize, seed: u64, opts: CheckOptions) -> Result<GradReport> {
    let (value, sig0, grad) = analytic_gradient(f, x)?;
    let mut blocks: Vec<(String, Vec<usize>)> = Vec::new();
    for i in 0..x.len() {
        let l = f.label(i);
        match blocks.last_mut() {
            Some((name, ids)) if *name == l => ids.push(i),
            _ => blocks.push((l, vec![i])),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools: Vec<Vec<usize>> = blocks
        .iter()
        .map(|(_, ids)| {
            let live: Vec<usize> = ids.iter().copied().filter(|&i| grad[i] != 0.0).collect();
            let mut pool = if live.is_empty() { ids.clone() } else { live };
            pool.shuffle(&mut rng);
            pool
        })
        .collect();
    let mut coords = Vec::with_capacity(n);
    while coords.len() < n && pools.iter().any(|p| !p.is_empty()) {
        for p in pools.iter_mut() {
            if coords.len() < n {
                if let Some(i) = p.pop() {
                    coords.push(i);
                }
            }
        }
    }
    check_with_gradient(f, x, &coords, opts, value, sig0, &grad)
}
