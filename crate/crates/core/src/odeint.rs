//! Classical fixed-step Runge–Kutta 4.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    #[serde(rename = "n")]
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n_steps: usize) -> Result<TimeGrid> {
        let g = TimeGrid { t0, dt, n_steps };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.t0.is_finite() || self.n_steps == 0 {
            return Err(Error::invalid(
                "time grid",
                format!("t0 = {}, dt = {}, n = {}", self.t0, self.dt, self.n_steps),
            ));
        }
        Ok(())
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// All `n_steps + 1` node times.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.time(i)).collect()
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n_steps)
    }

    /// Piecewise-linear interpolation of node values; flat outside the grid.
    pub fn interp<R: Real>(&self, nodes: &[R], t: f64) -> R {
        debug_assert_eq!(nodes.len(), self.n_steps + 1);
        let s = (t - self.t0) / self.dt;
        if s <= 0.0 {
            return nodes[0];
        }
        if s >= self.n_steps as f64 {
            return nodes[self.n_steps];
        }
        let i = (s.floor() as usize).min(self.n_steps - 1);
        let w = s - i as f64;
        if w == 0.0 {
            nodes[i]
        } else {
            nodes[i] * (1.0 - w) + nodes[i + 1] * w
        }
    }

    /// Trapezoidal integral of node values.
    pub fn trapz<R: Real>(&self, nodes: &[R]) -> R {
        let n = nodes.len();
        let inner = R::sum(&nodes[1..n - 1]);
        (inner + (nodes[0] + nodes[n - 1]) * 0.5) * self.dt
    }

    /// The same span with each step split into `k` substeps.
    pub fn refined(&self, k: usize) -> TimeGrid {
        TimeGrid {
            t0: self.t0,
            dt: self.dt / k as f64,
            n_steps: self.n_steps * k,
        }
    }
}

fn axpy<R: Real>(y: &[R], h: f64, k: &[R]) -> Vec<R> {
    y.iter().zip(k).map(|(&a, &b)| a + b * h).collect()
}

fn check<R: Real>(k: &[R], t: f64, stage: usize) -> Result<()> {
    if k.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { t, step: 0, stage })
    }
}

fn with_step(e: Error, step: usize) -> Error {
    match e {
        Error::Diverged { t, stage, .. } => Error::Diverged { t, step, stage },
        e => e,
    }
}

/// One RK4 step. Stage indices in errors are 1-based.
pub fn rk4_step<R, F>(f: &mut F, y: &[R], t: f64, dt: f64) -> Result<Vec<R>>
where
    R: Real,
    F: FnMut(f64, &[R]) -> Result<Vec<R>>,
{
    let half = 0.5 * dt;
    let k1 = f(t, y)?;
    check(&k1, t, 1)?;
    let k2 = f(t + half, &axpy(y, half, &k1))?;
    check(&k2, t + half, 2)?;
    let k3 = f(t + half, &axpy(y, half, &k2))?;
    check(&k3, t + half, 3)?;
    let k4 = f(t + dt, &axpy(y, dt, &k3))?;
    check(&k4, t + dt, 4)?;
    let w = dt / 6.0;
    let out: Vec<R> = (0..y.len())
        .map(|i| y[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * w)
        .collect();
    check(&out, t + dt, 0)?;
    Ok(out)
}

/// States at every grid node, `n_steps + 1` entries starting with `y0`.
pub fn integrate<R, F>(mut f: F, y0: &[R], grid: &TimeGrid) -> Result<Vec<Vec<R>>>
where
    R: Real,
    F: FnMut(f64, &[R]) -> Result<Vec<R>>,
{
    integrate_substeps(&mut f, y0, grid, 1)
}

/// Like [`integrate`] but takes `substeps` RK4 steps per grid interval and
/// records only the grid nodes.
pub fn integrate_substeps<R, F>(mut f: F, y0: &[R], grid: &TimeGrid, substeps: usize) -> Result<Vec<Vec<R>>>
where
    R: Real,
    F: FnMut(f64, &[R]) -> Result<Vec<R>>,
{
    grid.validate()?;
    let substeps = substeps.max(1);
    let h = grid.dt / substeps as f64;
    let mut out = Vec::with_capacity(grid.n_steps + 1);
    out.push(y0.to_vec());
    let mut y = y0.to_vec();
    for i in 0..grid.n_steps {
        let t_i = grid.time(i);
        for s in 0..substeps {
            let t = t_i + s as f64 * h;
            y = rk4_step(&mut f, &y, t, h).map_err(|e| with_step(e, i))?;
        }
        out.push(y.clone());
    }
    Ok(out)
}
