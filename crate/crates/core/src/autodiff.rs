//! Scalar reverse-mode automatic differentiation.
//!
//! A [`Tape`] is bound to the current thread while it lives. Every arithmetic
//! operation on a [`Var`] appends a node holding its value and local partials,
//! so parents always precede children and a single reverse sweep in index
//! order yields the gradient. Constants created with [`Tape::lift`] or
//! [`Real::cst`] never touch the tape.
//!
//! Dot products over contiguous runs of variables (the affine layers of an
//! MLP) are stored as one fused node instead of `2n` scalar nodes.

use std::cell::RefCell;
use std::marker::PhantomData;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::atomic::{AtomicU32, Ordering};

use crate::error::{Error, Result};
use crate::real::{powf_f64, sigmoid_f64, softplus_f64, Real};

const NONE: u32 = u32::MAX;

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf,
    Unary { a: u32, da: f64 },
    Binary { a: u32, b: u32, da: f64, db: f64 },
    /// `Σ v[w+i]·v[x+i]` over two contiguous node ranges.
    DotVV { w: u32, x: u32, len: u32 },
    /// `Σ v[w+i]·aux[c+i]` with constant right-hand factors.
    DotVC { w: u32, c: u32, len: u32 },
    /// General fan-in with explicit `(parent, partial)` edges.
    Nary { e: u32, len: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonFinite {
    pub node: usize,
    pub op: &'static str,
}

struct TapeData {
    id: u32,
    vals: Vec<f64>,
    nodes: Vec<Node>,
    aux: Vec<f64>,
    edges: Vec<(u32, f64)>,
    params: Vec<u32>,
    first_nonfinite: Option<NonFinite>,
}

impl TapeData {
    #[inline]
    fn push(&mut self, v: f64, node: Node, op: &'static str) -> Var {
        let idx = self.vals.len();
        if !v.is_finite() && self.first_nonfinite.is_none() {
            self.first_nonfinite = Some(NonFinite { node: idx, op });
        }
        self.vals.push(v);
        self.nodes.push(node);
        Var {
            v,
            idx: idx as u32,
            tape: self.id,
        }
    }
}

thread_local! {
    static ACTIVE: RefCell<Option<TapeData>> = const { RefCell::new(None) };
}

#[inline]
fn with_tape<R>(f: impl FnOnce(&mut TapeData) -> R) -> R {
    ACTIVE.with(|cell| {
        let mut guard = cell.borrow_mut();
        let tape = guard
            .as_mut()
            .expect("tracked variable used with no active tape on this thread");
        f(tape)
    })
}

/// A value that may be tracked on the active tape.
#[derive(Debug, Clone, Copy)]
pub struct Var {
    v: f64,
    idx: u32,
    tape: u32,
}

impl Var {
    pub fn constant(v: f64) -> Var {
        Var {
            v,
            idx: NONE,
            tape: 0,
        }
    }

    #[inline]
    pub fn val(self) -> f64 {
        self.v
    }

    #[inline]
    pub fn is_tracked(self) -> bool {
        self.idx != NONE
    }

    /// Position on the tape, `None` for constants.
    pub fn node(self) -> Option<usize> {
        self.is_tracked().then_some(self.idx as usize)
    }

    #[inline]
    fn unary(self, v: f64, da: f64, op: &'static str) -> Var {
        if !self.is_tracked() {
            return Var::constant(v);
        }
        with_tape(|t| t.push(v, Node::Unary { a: self.idx, da }, op))
    }

    #[inline]
    fn binary(self, other: Var, v: f64, da: f64, db: f64, op: &'static str) -> Var {
        match (self.is_tracked(), other.is_tracked()) {
            (false, false) => Var::constant(v),
            (true, false) => self.unary(v, da, op),
            (false, true) => other.unary(v, db, op),
            (true, true) => {
                debug_assert_eq!(self.tape, other.tape, "variables from different tapes");
                with_tape(|t| {
                    t.push(
                        v,
                        Node::Binary {
                            a: self.idx,
                            b: other.idx,
                            da,
                            db,
                        },
                        op,
                    )
                })
            }
        }
    }

    pub fn max0(self) -> Var {
        self.relu()
    }
}

/// Owns the thread's active tape for as long as it lives.
pub struct Tape {
    id: u32,
    _thread_bound: PhantomData<*const ()>,
}

impl Tape {
    /// Activates a fresh tape on the current thread.
    pub fn new() -> Result<Tape> {
        ACTIVE.with(|cell| {
            let mut slot = cell.borrow_mut();
            if slot.is_some() {
                return Err(Error::TapeBusy);
            }
            let id = NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed);
            *slot = Some(TapeData {
                id,
                vals: Vec::new(),
                nodes: Vec::new(),
                aux: Vec::new(),
                edges: Vec::new(),
                params: Vec::new(),
                first_nonfinite: None,
            });
            Ok(Tape {
                id,
                _thread_bound: PhantomData,
            })
        })
    }

    pub fn param(&self, x: f64) -> Var {
        with_tape(|t| {
            let v = t.push(x, Node::Leaf, "param");
            t.params.push(v.idx);
            v
        })
    }

    pub fn params(&self, xs: &[f64]) -> Vec<Var> {
        xs.iter().map(|&x| self.param(x)).collect()
    }

    pub fn lift(&self, x: f64) -> Var {
        Var::constant(x)
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        with_tape(|t| t.vals.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The first operation that produced a non-finite value, if any.
    pub fn first_nonfinite(&self) -> Option<NonFinite> {
        with_tape(|t| t.first_nonfinite)
    }

    /// Reverse sweep from `out`. Parameters are reported in creation order.
    pub fn backward(&self, out: Var) -> Result<Gradient> {
        with_tape(|t| {
            let n = t.vals.len();
            if !out.is_tracked() {
                return Ok(Gradient {
                    adjoint: vec![0.0; n],
                    params: t.params.clone(),
                    visited: 0,
                    tape: self.id,
                });
            }
            if out.tape != self.id || out.idx as usize >= n {
                return Err(Error::ForeignVariable);
            }
            let mut g = vec![0.0f64; n];
            g[out.idx as usize] = 1.0;
            let mut visited = 0usize;
            for i in (0..=out.idx as usize).rev() {
                visited += 1;
                let gi = g[i];
                if gi == 0.0 {
                    continue;
                }
                match t.nodes[i] {
                    Node::Leaf => {}
                    Node::Unary { a, da } => g[a as usize] += gi * da,
                    Node::Binary { a, b, da, db } => {
                        g[a as usize] += gi * da;
                        g[b as usize] += gi * db;
                    }
                    Node::DotVV { w, x, len } => {
                        let (w, x, len) = (w as usize, x as usize, len as usize);
                        for k in 0..len {
                            let wv = t.vals[w + k];
                            let xv = t.vals[x + k];
                            g[w + k] += gi * xv;
                            g[x + k] += gi * wv;
                        }
                    }
                    Node::DotVC { w, c, len } => {
                        let (w, c, len) = (w as usize, c as usize, len as usize);
                        let consts = &t.aux[c..c + len];
                        for (gw, cv) in g[w..w + len].iter_mut().zip(consts) {
                            *gw += gi * cv;
                        }
                    }
                    Node::Nary { e, len } => {
                        let (e, len) = (e as usize, len as usize);
                        for &(p, d) in &t.edges[e..e + len] {
                            g[p as usize] += gi * d;
                        }
                    }
                }
            }
            Ok(Gradient {
                adjoint: g,
                params: t.params.clone(),
                visited,
                tape: self.id,
            })
        })
    }
}

impl Drop for Tape {
    fn drop(&mut self) {
        ACTIVE.with(|cell| {
            let mut slot = cell.borrow_mut();
            if slot.as_ref().is_some_and(|t| t.id == self.id) {
                *slot = None;
            }
        });
    }
}

/// Creates a tracked parameter on the thread's active tape.
pub fn parameter(x: f64) -> Result<Var> {
    ACTIVE.with(|cell| {
        let mut slot = cell.borrow_mut();
        let t = slot.as_mut().ok_or(Error::NoActiveTape)?;
        let v = t.push(x, Node::Leaf, "param");
        t.params.push(v.idx);
        Ok(v)
    })
}

/// Wraps `x` as a constant; fails when no tape is active on this thread.
pub fn lift(x: f64) -> Result<Var> {
    ACTIVE.with(|cell| {
        if cell.borrow().is_none() {
            Err(Error::NoActiveTape)
        } else {
            Ok(Var::constant(x))
        }
    })
}

pub struct Gradient {
    adjoint: Vec<f64>,
    params: Vec<u32>,
    visited: usize,
    tape: u32,
}

impl Gradient {
    /// Derivative of the output with respect to `v`; zero for constants.
    pub fn wrt(&self, v: Var) -> f64 {
        if !v.is_tracked() || v.tape != self.tape {
            return 0.0;
        }
        self.adjoint.get(v.idx as usize).copied().unwrap_or(0.0)
    }

    /// Gradient over all parameters in creation order.
    pub fn params(&self) -> Vec<f64> {
        self.params
            .iter()
            .map(|&i| self.adjoint[i as usize])
            .collect()
    }

    /// Nodes touched by the reverse sweep.
    pub fn visited(&self) -> usize {
        self.visited
    }
}

fn contiguous(xs: &[Var]) -> Option<u32> {
    let first = xs.first()?;
    if !first.is_tracked() {
        return None;
    }
    let start = first.idx;
    xs.iter()
        .enumerate()
        .all(|(k, v)| v.is_tracked() && v.idx == start + k as u32)
        .then_some(start)
}

impl Real for Var {
    #[inline]
    fn cst(x: f64) -> Self {
        Var::constant(x)
    }
    #[inline]
    fn value(self) -> f64 {
        self.v
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.unary(e, e, "exp")
    }
    fn ln(self) -> Self {
        self.unary(self.v.ln(), 1.0 / self.v, "ln")
    }
    fn tanh(self) -> Self {
        let th = self.v.tanh();
        self.unary(th, 1.0 - th * th, "tanh")
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.unary(s, 0.5 / s, "sqrt")
    }
    fn powf(self, p: f64) -> Self {
        if p == 0.0 {
            return Var::constant(1.0);
        }
        if p == 1.0 {
            return self;
        }
        let v = powf_f64(self.v, p);
        // Zero slope at the origin for fractional orders rather than +inf.
        let d = if self.v == 0.0 && p < 1.0 {
            0.0
        } else {
            p * powf_f64(self.v, p - 1.0)
        };
        self.unary(v, d, "powf")
    }
    fn pow(self, p: Self) -> Self {
        let v = self.v.powf(p.v);
        let da = p.v * self.v.powf(p.v - 1.0);
        let db = v * self.v.ln();
        self.binary(p, v, da, db, "pow")
    }
    fn softplus(self) -> Self {
        self.unary(softplus_f64(self.v), sigmoid_f64(self.v), "softplus")
    }
    fn relu(self) -> Self {
        if self.v > 0.0 {
            self
        } else {
            Var::constant(0.0)
        }
    }
    fn clamp(self, lo: f64, hi: f64) -> Self {
        if self.v < lo {
            Var::constant(lo)
        } else if self.v > hi {
            Var::constant(hi)
        } else {
            self
        }
    }

    fn dot(w: &[Self], x: &[Self]) -> Self {
        assert_eq!(w.len(), x.len(), "dot length mismatch");
        let v: f64 = w.iter().zip(x).map(|(a, b)| a.v * b.v).sum();
        if w.is_empty() {
            return Var::constant(0.0);
        }
        let len = w.len() as u32;
        let wc = contiguous(w);
        let xc = contiguous(x);
        let x_const = x.iter().all(|e| !e.is_tracked());
        let w_const = w.iter().all(|e| !e.is_tracked());
        if w_const && x_const {
            return Var::constant(v);
        }
        with_tape(|t| match (wc, xc) {
            (Some(ws), Some(xs)) => t.push(v, Node::DotVV { w: ws, x: xs, len }, "dot"),
            (Some(ws), None) if x_const => {
                let c = t.aux.len() as u32;
                t.aux.extend(x.iter().map(|e| e.v));
                t.push(v, Node::DotVC { w: ws, c, len }, "dot")
            }
            (None, Some(xs)) if w_const => {
                let c = t.aux.len() as u32;
                t.aux.extend(w.iter().map(|e| e.v));
                t.push(v, Node::DotVC { w: xs, c, len }, "dot")
            }
            _ => {
                let e = t.edges.len() as u32;
                for (a, b) in w.iter().zip(x) {
                    if a.is_tracked() {
                        t.edges.push((a.idx, b.v));
                    }
                    if b.is_tracked() {
                        t.edges.push((b.idx, a.v));
                    }
                }
                let n = t.edges.len() as u32 - e;
                t.push(v, Node::Nary { e, len: n }, "dot")
            }
        })
    }

    fn sum(xs: &[Self]) -> Self {
        let v: f64 = xs.iter().map(|e| e.v).sum();
        if xs.iter().all(|e| !e.is_tracked()) {
            return Var::constant(v);
        }
        with_tape(|t| {
            let e = t.edges.len() as u32;
            t.edges
                .extend(xs.iter().filter(|x| x.is_tracked()).map(|x| (x.idx, 1.0)));
            let n = t.edges.len() as u32 - e;
            t.push(v, Node::Nary { e, len: n }, "sum")
        })
    }
}

impl Add for Var {
    type Output = Var;
    #[inline]
    fn add(self, o: Var) -> Var {
        self.binary(o, self.v + o.v, 1.0, 1.0, "add")
    }
}

impl Sub for Var {
    type Output = Var;
    #[inline]
    fn sub(self, o: Var) -> Var {
        self.binary(o, self.v - o.v, 1.0, -1.0, "sub")
    }
}

impl Mul for Var {
    type Output = Var;
    #[inline]
    fn mul(self, o: Var) -> Var {
        self.binary(o, self.v * o.v, o.v, self.v, "mul")
    }
}

impl Div for Var {
    type Output = Var;
    #[inline]
    fn div(self, o: Var) -> Var {
        let q = self.v / o.v;
        self.binary(o, q, 1.0 / o.v, -q / o.v, "div")
    }
}

impl Neg for Var {
    type Output = Var;
    #[inline]
    fn neg(self) -> Var {
        self.unary(-self.v, -1.0, "neg")
    }
}

impl Add<f64> for Var {
    type Output = Var;
    #[inline]
    fn add(self, c: f64) -> Var {
        self.unary(self.v + c, 1.0, "add")
    }
}

impl Sub<f64> for Var {
    type Output = Var;
    #[inline]
    fn sub(self, c: f64) -> Var {
        self.unary(self.v - c, 1.0, "sub")
    }
}

impl Mul<f64> for Var {
    type Output = Var;
    #[inline]
    fn mul(self, c: f64) -> Var {
        self.unary(self.v * c, c, "mul")
    }
}

impl Div<f64> for Var {
    type Output = Var;
    #[inline]
    fn div(self, c: f64) -> Var {
        self.unary(self.v / c, 1.0 / c, "div")
    }
}

impl Add<Var> for f64 {
    type Output = Var;
    fn add(self, v: Var) -> Var {
        v + self
    }
}

impl Sub<Var> for f64 {
    type Output = Var;
    fn sub(self, v: Var) -> Var {
        v.unary(self - v.v, -1.0, "sub")
    }
}

impl Mul<Var> for f64 {
    type Output = Var;
    fn mul(self, v: Var) -> Var {
        v * self
    }
}

impl Div<Var> for f64 {
    type Output = Var;
    fn div(self, v: Var) -> Var {
        let q = self / v.v;
        v.unary(q, -q / v.v, "div")
    }
}
