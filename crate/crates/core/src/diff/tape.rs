use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::Real;
use crate::error::{Error, Result};

/// Node id used for constants and for everything recorded on a passive tape.
pub const NONE: u32 = u32::MAX;

/// A thread-safe reference to a recorded value: node id plus cached value.
///
/// Handles are what crosses thread boundaries; a [`Var`] is a handle bound
/// to the tape it lives on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Handle {
    pub id: u32,
    pub val: f64,
}

impl Handle {
    pub fn constant(val: f64) -> Self {
        Handle { id: NONE, val }
    }

    pub fn is_constant(&self) -> bool {
        self.id == NONE
    }
}

#[derive(Default)]
struct Inner {
    vals: Vec<f64>,
    ends: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
    pushes: u64,
    hash: u64,
    nonfinite: Option<(u64, f64)>,
}

/// Reverse-mode recording tape.
///
/// Nodes are stored in creation order, so every parent precedes its children
/// and the backward sweep is a single reverse scan. A passive tape records
/// nothing but still tracks branch decisions and non-finite values, which is
/// how losses are evaluated for finite differences on the exact same code
/// path that records them.
pub struct Tape {
    recording: bool,
    inner: RefCell<Inner>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { recording: true, inner: RefCell::default() }
    }

    pub fn passive() -> Self {
        Tape { recording: false, inner: RefCell::default() }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    /// Number of stored nodes.
    pub fn len(&self) -> usize {
        self.inner.borrow().vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        let mut t = self.inner.borrow_mut();
        t.vals.clear();
        t.ends.clear();
        t.parents.clear();
        t.partials.clear();
        t.pushes = 0;
        t.hash = 0;
        t.nonfinite = None;
    }

    /// Store a node. Derived nodes without any recorded parent stay
    /// constants and take no space.
    fn push<I>(&self, val: f64, edges: I, leaf: bool) -> u32
    where
        I: IntoIterator<Item = (u32, f64)>,
    {
        let mut t = self.inner.borrow_mut();
        let serial = t.pushes;
        t.pushes += 1;
        if !val.is_finite() && t.nonfinite.is_none() {
            t.nonfinite = Some((serial, val));
        }
        if !self.recording {
            return NONE;
        }
        let mut live = false;
        for (p, d) in edges {
            if p != NONE {
                live = true;
                if d != 0.0 {
                    t.parents.push(p);
                    t.partials.push(d);
                }
            }
        }
        if !live && !leaf {
            return NONE;
        }
        let id = t.vals.len() as u32;
        t.vals.push(val);
        let end = t.parents.len() as u32;
        t.ends.push(end);
        id
    }

    /// A differentiable input (parameter) node.
    pub fn leaf(&self, val: f64) -> Var<'_> {
        let id = self.push(val, std::iter::empty(), true);
        Var { tape: self, id, val }
    }

    pub fn constant(&self, val: f64) -> Var<'_> {
        Var { tape: self, id: NONE, val }
    }

    /// Rebind a handle recorded on this tape.
    pub fn at(&self, h: Handle) -> Var<'_> {
        Var { tape: self, id: h.id, val: h.val }
    }

    /// Append a node emitted by a [`SubTape`]; ids in `e.edges` refer to this tape.
    pub fn push_emitted(&self, e: &Emitted) -> Var<'_> {
        let id = self.push(e.value, e.edges.iter().copied(), false);
        Var { tape: self, id, val: e.value }
    }

    pub fn note_branch(&self, key: u64) {
        let mut t = self.inner.borrow_mut();
        t.hash = (t.hash.rotate_left(7) ^ key).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    }

    /// Order-dependent digest of every discrete decision noted so far.
    pub fn branch_signature(&self) -> u64 {
        self.inner.borrow().hash
    }

    /// Error if any pushed value was NaN or infinite, naming the first one.
    pub fn check_finite(&self) -> Result<()> {
        match self.inner.borrow().nonfinite {
            Some((node, value)) => Err(Error::NonFinite { node, value }),
            None => Ok(()),
        }
    }

    /// Adjoints of every node for a scalar output.
    pub fn gradient(&self, output: Var<'_>) -> Adjoints {
        let t = self.inner.borrow();
        let mut adj = vec![0.0; t.vals.len()];
        if output.id != NONE {
            adj[output.id as usize] = 1.0;
            for i in (0..=output.id as usize).rev() {
                let g = adj[i];
                if g == 0.0 {
                    continue;
                }
                let start = if i == 0 { 0 } else { t.ends[i - 1] as usize };
                for e in start..t.ends[i] as usize {
                    adj[t.parents[e] as usize] += g * t.partials[e];
                }
            }
        }
        Adjoints { adj }
    }

    /// Adjoints for several outputs at once; entry `i * k + j` is
    /// d outputs[j] / d node i.
    fn gradient_multi(&self, outputs: &[Var<'_>]) -> Vec<f64> {
        let t = self.inner.borrow();
        let k = outputs.len();
        let n = t.vals.len();
        let mut adj = vec![0.0; n * k];
        let mut top = 0;
        for (j, o) in outputs.iter().enumerate() {
            if o.id != NONE {
                adj[o.id as usize * k + j] += 1.0;
                top = top.max(o.id as usize + 1);
            }
        }
        for i in (0..top).rev() {
            let start = if i == 0 { 0 } else { t.ends[i - 1] as usize };
            let end = t.ends[i] as usize;
            if start == end {
                continue;
            }
            for j in 0..k {
                let g = adj[i * k + j];
                if g == 0.0 {
                    continue;
                }
                for e in start..end {
                    adj[t.parents[e] as usize * k + j] += g * t.partials[e];
                }
            }
        }
        adj
    }
}

/// Result of a backward sweep.
pub struct Adjoints {
    adj: Vec<f64>,
}

impl Adjoints {
    pub fn wrt(&self, h: Handle) -> f64 {
        if h.id == NONE {
            0.0
        } else {
            self.adj.get(h.id as usize).copied().unwrap_or(0.0)
        }
    }

    pub fn wrt_all(&self, hs: &[Handle]) -> Vec<f64> {
        hs.iter().map(|&h| self.wrt(h)).collect()
    }
}

/// A recorded scalar. Arithmetic on `Var`s appends nodes to their tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({}#{})", self.val, self.id)
    }
}

impl<'t> Var<'t> {
    pub fn handle(&self) -> Handle {
        Handle { id: self.id, val: self.val }
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn node(&self, val: f64, edges: &[(u32, f64)]) -> Var<'t> {
        let id = self.tape.push(val, edges.iter().copied(), false);
        Var { tape: self.tape, id, val }
    }
}

impl<'t> Real for Var<'t> {
    #[inline]
    fn value(&self) -> f64 {
        self.val
    }

    #[inline]
    fn lift(&self, v: f64) -> Self {
        self.tape.constant(v)
    }

    fn custom(&self, value: f64, parents: &[(Self, f64)]) -> Self {
        let id = self.tape.push(value, parents.iter().map(|(p, d)| (p.id, *d)), false);
        Var { tape: self.tape, id, val: value }
    }

    fn branch(&self, key: u64) {
        self.tape.note_branch(key);
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, o: Var<'t>) -> Var<'t> {
        self.node(self.val + o.val, &[(self.id, 1.0), (o.id, 1.0)])
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, o: Var<'t>) -> Var<'t> {
        self.node(self.val - o.val, &[(self.id, 1.0), (o.id, -1.0)])
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, o: Var<'t>) -> Var<'t> {
        self.node(self.val * o.val, &[(self.id, o.val), (o.id, self.val)])
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, o: Var<'t>) -> Var<'t> {
        let q = self.val / o.val;
        self.node(q, &[(self.id, 1.0 / o.val), (o.id, -q / o.val)])
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.node(-self.val, &[(self.id, -1.0)])
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.node(self.val + c, &[(self.id, 1.0)])
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        self.node(self.val - c, &[(self.id, 1.0)])
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.node(self.val * c, &[(self.id, c)])
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Var<'t> {
        self.node(self.val / c, &[(self.id, 1.0 / c)])
    }
}

/// A node produced on a [`SubTape`], ready to be appended to the global tape.
#[derive(Clone, Debug, Default)]
pub struct Emitted {
    pub value: f64,
    /// `(global node id, partial)`, sorted by id with duplicates merged.
    pub edges: Vec<(u32, f64)>,
}

/// Scratch tape for one independent unit of work (a pixel).
///
/// Inputs are leaves that remember which global node they stand for; after
/// the local computation the outputs are collapsed into single global nodes
/// whose parents are those global inputs.
pub struct SubTape {
    tape: Tape,
    inputs: RefCell<Vec<(u32, u32)>>,
}

impl SubTape {
    pub fn new(recording: bool) -> Self {
        SubTape { tape: if recording { Tape::new() } else { Tape::passive() }, inputs: RefCell::new(Vec::new()) }
    }

    pub fn clear(&self) {
        self.tape.clear();
        self.inputs.borrow_mut().clear();
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn input(&self, h: Handle) -> Var<'_> {
        if h.id == NONE || !self.tape.recording {
            return self.tape.constant(h.val);
        }
        let v = self.tape.leaf(h.val);
        self.inputs.borrow_mut().push((v.id, h.id));
        v
    }

    pub fn constant(&self, v: f64) -> Var<'_> {
        self.tape.constant(v)
    }

    pub fn signature(&self) -> u64 {
        self.tape.branch_signature()
    }

    pub fn check_finite(&self) -> Result<()> {
        self.tape.check_finite()
    }

    /// Collapse `outputs` into global-tape nodes.
    pub fn emit(&self, outputs: &[Var<'_>]) -> Vec<Emitted> {
        let k = outputs.len();
        if !self.tape.recording {
            return outputs.iter().map(|o| Emitted { value: o.val, edges: Vec::new() }).collect();
        }
        let adj = self.tape.gradient_multi(outputs);
        let inputs = self.inputs.borrow();
        let mut out = Vec::with_capacity(k);
        for (j, o) in outputs.iter().enumerate() {
            let mut edges: Vec<(u32, f64)> = inputs
                .iter()
                .filter_map(|&(local, global)| {
                    let d = adj[local as usize * k + j];
                    (d != 0.0).then_some((global, d))
                })
                .collect();
            edges.sort_by_key(|e| e.0);
            let mut merged: Vec<(u32, f64)> = Vec::with_capacity(edges.len());
            for (g, d) in edges {
                match merged.last_mut() {
                    Some(last) if last.0 == g => last.1 += d,
                    _ => merged.push((g, d)),
                }
            }
            out.push(Emitted { value: o.val, edges: merged });
        }
        out
    }
}

/// Source of scalars for generic evaluation code.
///
/// `Plain` evaluates in `f64`; `&Tape` records directly on a tape; `&SubTape`
/// records on a scratch tape whose results are later emitted.
pub trait Ctx {
    type S: Real;
    fn input(&self, h: Handle) -> Self::S;
    fn constant(&self, v: f64) -> Self::S;
    fn note(&self, _key: u64) {}
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Plain;

impl Ctx for Plain {
    type S = f64;
    fn input(&self, h: Handle) -> f64 {
        h.val
    }
    fn constant(&self, v: f64) -> f64 {
        v
    }
}

impl<'a> Ctx for &'a Tape {
    type S = Var<'a>;
    fn input(&self, h: Handle) -> Var<'a> {
        self.at(h)
    }
    fn constant(&self, v: f64) -> Var<'a> {
        Tape::constant(self, v)
    }
    fn note(&self, key: u64) {
        self.note_branch(key)
    }
}

impl<'a> Ctx for &'a SubTape {
    type S = Var<'a>;
    fn input(&self, h: Handle) -> Var<'a> {
        SubTape::input(self, h)
    }
    fn constant(&self, v: f64) -> Var<'a> {
        SubTape::constant(self, v)
    }
    fn note(&self, key: u64) {
        self.tape.note_branch(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_value_and_gradient() {
        let t = Tape::new();
        let x = t.leaf(3.0);
        let y = x * x;
        assert_eq!(y.value(), 9.0);
        let g = t.gradient(y);
        assert_eq!(g.wrt(x.handle()), 6.0);
    }

    #[test]
    fn product_gradient() {
        let t = Tape::new();
        let x = t.leaf(2.0);
        let y = t.leaf(5.0);
        let g = t.gradient(x * y);
        assert_eq!(g.wrt(x.handle()), 5.0);
        assert_eq!(g.wrt(y.handle()), 2.0);
    }

    #[test]
    fn constant_output_has_no_gradient() {
        let t = Tape::new();
        let x = t.leaf(2.0);
        let c = t.constant(4.0) * 3.0;
        let g = t.gradient(c);
        assert_eq!(g.wrt(x.handle()), 0.0);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn nonfinite_is_reported_with_node() {
        let t = Tape::new();
        let x = t.leaf(0.0);
        let _ = x.ln();
        match t.check_finite() {
            Err(Error::NonFinite { node, .. }) => assert_eq!(node, 1),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn passive_tape_matches_recorded_value() {
        let f = |t: &Tape| {
            let x = t.leaf(1.25);
            let y = t.leaf(-0.5);
            ((x * y).sin() + x.sqrt() / (y * y + 1.0)).abs().value()
        };
        assert_eq!(f(&Tape::new()), f(&Tape::passive()));
    }

    #[test]
    fn subtape_emission_merges_duplicate_inputs() {
        let global = Tape::new();
        let a = global.leaf(2.0);
        let b = global.leaf(3.0);
        let sub = SubTape::new(true);
        let a1 = sub.input(a.handle());
        let a2 = sub.input(a.handle());
        let bb = sub.input(b.handle());
        let out = a1 * bb + a2 * a2;
        let em = sub.emit(&[out, bb * 2.0]);
        assert_eq!(em[0].edges, vec![(a.id, 3.0 + 4.0), (b.id, 2.0)]);
        let y = global.push_emitted(&em[0]);
        let g = global.gradient(y * 2.0);
        assert_eq!(g.wrt(a.handle()), 14.0);
        assert_eq!(g.wrt(b.handle()), 4.0);
        assert_eq!(em[1].edges, vec![(b.id, 2.0)]);
    }

    #[test]
    fn branch_signature_tracks_kinks() {
        let sig = |x0: f64| {
            let t = Tape::passive();
            let x = t.leaf(x0);
            let _ = x.abs();
            t.branch_signature()
        };
        assert_eq!(sig(0.3), sig(0.7));
        assert_ne!(sig(0.3), sig(-0.3));
    }
}
