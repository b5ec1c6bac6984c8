//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! Objective evaluations that fail (`None`) or return a non-finite value are
//! treated as `+inf`, which makes the line search back off.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when `‖g‖∞` falls below this.
    pub grad_tol: f64,
    /// Stop when the relative decrease of one accepted step falls below this; 0 disables.
    pub f_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_evals: usize,
    /// Euclidean length of the first trial step from a steepest-descent start.
    pub first_step: f64,
    /// Upper bound on the Euclidean length of any trial step.
    pub max_step: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            max_iters: 100,
            grad_tol: 1e-6,
            f_tol: 0.0,
            c1: 1e-4,
            c2: 0.9,
            max_line_evals: 25,
            first_step: 1.0,
            max_step: f64::MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub loss: f64,
    pub grad_inf: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    SmallDecrease,
    MaxIters,
    LineSearchFailed,
    /// The starting point could not be evaluated.
    BadStart,
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub g: Vec<f64>,
    /// Entry 0 is the starting point; one entry per accepted step after that.
    pub history: Vec<IterRecord>,
    pub status: Status,
    pub evals: usize,
}

impl OptResult {
    pub fn iterations(&self) -> usize {
        self.history.len().saturating_sub(1)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        self.evals += 1;
        match (self.f)(x) {
            Some((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => Some((f, g)),
            _ => None,
        }
    }
}

struct Point {
    a: f64,
    f: f64,
    g: Vec<f64>,
    d: f64,
}

/// Cubic minimizer of the interpolant through `(a, fa, da)` and `(b, fb, db)`,
/// safeguarded into the inner 80% of the bracket.
fn interpolate(lo: &Point, hi_a: f64, hi: Option<&Point>) -> f64 {
    let (a, b) = (lo.a, hi_a);
    let (left, right) = (a.min(b), a.max(b));
    let width = right - left;
    let guard = |t: f64| {
        if t.is_finite() && t > left + 0.1 * width && t < right - 0.1 * width {
            t
        } else {
            0.5 * (a + b)
        }
    };
    let Some(hi) = hi else {
        return 0.5 * (a + b);
    };
    let d1 = lo.d + hi.d - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.d * hi.d;
    if disc < 0.0 {
        return guard(f64::NAN);
    }
    let d2 = (b - a).signum() * disc.sqrt();
    guard(b - (b - a) * (hi.d + d2 - d1) / (hi.d - lo.d + 2.0 * d2))
}

/// Strong-Wolfe search along `dir`. Returns the accepted point.
fn line_search<F>(
    obj: &mut Counted<F>,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    dir: &[f64],
    a_init: f64,
    opts: &LbfgsOptions,
) -> Option<(f64, f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let d0 = dot(g0, dir);
    if !(d0 < 0.0) {
        return None;
    }
    let at = |a: f64| -> Vec<f64> { x.iter().zip(dir).map(|(xi, di)| xi + a * di).collect() };
    let mut evals = 0;
    // Armijo, or near convergence where rounding hides the decrease in `f`,
    // the approximate-Wolfe slope test with no increase allowed.
    let armijo = |a: f64, f: f64| f <= f0 + opts.c1 * a * d0;
    let decrease = |a: f64, f: f64, d: f64| armijo(a, f) || (f <= f0 && d <= (2.0 * opts.c1 - 1.0) * d0);
    let curvature = |d: f64| d.abs() <= -opts.c2 * d0;

    let mut prev = Point {
        a: 0.0,
        f: f0,
        g: g0.to_vec(),
        d: d0,
    };
    let a_max = opts.max_step / dot(dir, dir).sqrt();
    let mut a = a_init.min(a_max);
    // Bracketing phase.
    let (mut lo, mut hi_a, mut hi) = loop {
        if evals >= opts.max_line_evals {
            return None;
        }
        evals += 1;
        match obj.eval(&at(a)) {
            None => break (prev, a, None),
            Some((f, g)) => {
                let d = dot(&g, dir);
                let p = Point { a, f, g, d };
                if !decrease(a, f, d) || (evals > 1 && f >= prev.f) {
                    break (prev, a, Some(p));
                }
                if curvature(d) {
                    return Some((a, p.f, p.g));
                }
                if d >= 0.0 {
                    let hi_a = prev.a;
                    break (p, hi_a, Some(prev));
                }
                if a >= a_max {
                    // Still descending at the longest allowed step.
                    return Some((a, p.f, p.g));
                }
                prev = p;
                a = (2.0 * a).min(a_max);
            }
        }
    };
    // Zoom phase.
    loop {
        if evals >= opts.max_line_evals {
            // Settle for sufficient decrease if the low end has it.
            return (lo.a > 0.0 && decrease(lo.a, lo.f, lo.d)).then_some((lo.a, lo.f, lo.g));
        }
        let a = interpolate(&lo, hi_a, hi.as_ref());
        if (a - lo.a).abs() < 1e-14 * a.abs().max(1e-300) {
            return (lo.a > 0.0).then_some((lo.a, lo.f, lo.g));
        }
        evals += 1;
        match obj.eval(&at(a)) {
            None => {
                hi_a = a;
                hi = None;
            }
            Some((f, g)) => {
                let d = dot(&g, dir);
                let p = Point { a, f, g, d };
                if !decrease(a, f, d) || f > lo.f || (f == lo.f && lo.a > 0.0) {
                    hi_a = a;
                    hi = Some(p);
                } else {
                    if curvature(d) {
                        return Some((a, p.f, p.g));
                    }
                    if d * (hi_a - lo.a) >= 0.0 {
                        hi_a = lo.a;
                        hi = Some(lo);
                    }
                    lo = p;
                }
            }
        }
    }
}

/// Minimizes `f` from `x0`. History and result are fully determined by the
/// objective, so repeated runs are identical.
pub fn minimize<F>(f: F, x0: &[f64], opts: &LbfgsOptions) -> OptResult
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    minimize_with(f, x0, opts, |_, _| {})
}

/// [`minimize`] with a callback after the start point and every accepted step.
pub fn minimize_with<F, C>(f: F, x0: &[f64], opts: &LbfgsOptions, mut on_iter: C) -> OptResult
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
    C: FnMut(&IterRecord, &[f64]),
{
    let mut obj = Counted { f, evals: 0 };
    let mut x = x0.to_vec();
    let Some((mut fx, mut g)) = obj.eval(&x) else {
        return OptResult {
            x,
            f: f64::INFINITY,
            g: vec![f64::NAN; x0.len()],
            history: vec![],
            status: Status::BadStart,
            evals: obj.evals,
        };
    };
    let first = IterRecord {
        iter: 0,
        loss: fx,
        grad_inf: inf_norm(&g),
        step: 0.0,
    };
    on_iter(&first, &x);
    let mut history = vec![first];
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut fell_back = false;

    let status = loop {
        if inf_norm(&g) < opts.grad_tol {
            break Status::Converged;
        }
        if history.len() > opts.max_iters {
            break Status::MaxIters;
        }
        let use_sd = mem.is_empty();
        let dir = if use_sd {
            g.iter().map(|v| -v).collect::<Vec<_>>()
        } else {
            two_loop(&g, &mem)
        };
        let a_init = if use_sd {
            (opts.first_step / dot(&g, &g).sqrt()).min(1.0)
        } else {
            1.0
        };
        match line_search(&mut obj, &x, fx, &g, &dir, a_init, opts) {
            Some((a, f_new, g_new)) => {
                fell_back = false;
                let x_new: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + a * di).collect();
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                    if mem.len() == opts.memory {
                        mem.pop_front();
                    }
                    mem.push_back((s, y, 1.0 / sy));
                }
                let decrease = (fx - f_new) / fx.abs().max(f_new.abs()).max(1.0);
                x = x_new;
                fx = f_new;
                g = g_new;
                let rec = IterRecord {
                    iter: history.len(),
                    loss: fx,
                    grad_inf: inf_norm(&g),
                    step: a * dir.iter().map(|v| v * v).sum::<f64>().sqrt(),
                };
                on_iter(&rec, &x);
                history.push(rec);
                if opts.f_tol > 0.0 && decrease < opts.f_tol {
                    break Status::SmallDecrease;
                }
            }
            None => {
                if fell_back || use_sd {
                    break Status::LineSearchFailed;
                }
                // Retry once from steepest descent with the curvature memory dropped.
                fell_back = true;
                mem.clear();
            }
        }
    };
    OptResult {
        x,
        f: fx,
        g,
        history,
        status,
        evals: obj.evals,
    }
}

fn two_loop(g: &[f64], mem: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alpha = vec![0.0; mem.len()];
    for (i, (s, y, rho)) in mem.iter().enumerate().rev() {
        let a = rho * dot(s, &q);
        alpha[i] = a;
        for (qj, yj) in q.iter_mut().zip(y) {
            *qj -= a * yj;
        }
    }
    let (s, y, _) = mem.back().expect("nonempty memory");
    let gamma = dot(s, y) / dot(y, y);
    for v in q.iter_mut() {
        *v *= gamma;
    }
    for (i, (s, y, rho)) in mem.iter().enumerate() {
        let b = rho * dot(y, &q);
        for (qj, sj) in q.iter_mut().zip(s) {
            *qj += (alpha[i] - b) * sj;
        }
    }
    q.iter().map(|v| -v).collect()
}
