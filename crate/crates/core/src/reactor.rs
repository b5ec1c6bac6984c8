//! Constant-volume continuously stirred tank reactor.
//!
//! The integrated state is `(m, Y_1..Y_n, T)`; pressure follows from the ideal
//! gas law. Outflow leaves at the reactor composition, so only inflow terms
//! appear in the species and energy balances. Deposited heat enters the
//! energy balance with a positive sign.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{net_production_rates, Mechanism};
use crate::odeint::{integrate_substeps, TimeGrid};
use crate::real::Real;
use crate::thermo::{mean_molecular_weight, R_U};

/// Inlet mass flow, constant or tabulated (linear between points, held flat outside).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FlowRate {
    Constant(f64),
    Table { t: Vec<f64>, mdot: Vec<f64> },
}

impl FlowRate {
    pub fn at(&self, time: f64) -> f64 {
        match self {
            FlowRate::Constant(m) => *m,
            FlowRate::Table { t, mdot } => interp(t, mdot, time),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            FlowRate::Constant(m) if *m >= 0.0 => Ok(()),
            FlowRate::Table { t, mdot }
                if t.len() == mdot.len()
                    && !t.is_empty()
                    && t.windows(2).all(|w| w[0] < w[1])
                    && mdot.iter().all(|&m| m >= 0.0) =>
            {
                Ok(())
            }
            _ => Err(Error::invalid("inlet", "mass flow must be nonnegative (tables strictly increasing in t)")),
        }
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + w * (ys[i + 1] - ys[i])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inlet {
    pub mdot: FlowRate,
    pub y_in: Vec<f64>,
    pub t_in: f64,
    /// Specific enthalpy of the inflow, J/kg.
    h_in: f64,
}

impl Inlet {
    pub fn new(mech: &Mechanism, mdot: FlowRate, y_in: Vec<f64>, t_in: f64) -> Result<Inlet> {
        mdot.validate()?;
        if y_in.len() != mech.n_species() || y_in.iter().any(|&y| !(y >= 0.0)) {
            return Err(Error::invalid("inlet", "composition must be nonnegative, one entry per species"));
        }
        let total: f64 = y_in.iter().sum();
        if (total - 1.0).abs() >= 1e-9 {
            return Err(Error::invalid("inlet", format!("composition sums to {total}")));
        }
        let mut h_in = 0.0;
        for (sp, &y) in mech.species.iter().zip(&y_in) {
            h_in += y * sp.h_mole(t_in)? / sp.w;
        }
        Ok(Inlet { mdot, y_in, t_in, h_in })
    }

    pub fn h_in(&self) -> f64 {
        self.h_in
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outlet {
    /// kg/(s·Pa)
    pub k_v: f64,
    /// Pa
    pub p_ambient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactorConfig {
    pub v: f64,
    pub inlets: Vec<Inlet>,
    pub outlet: Outlet,
    pub mech: Mechanism,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactorState {
    pub m: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "Y")]
    pub y: Vec<f64>,
}

impl ReactorState {
    pub fn new(m: f64, t: f64, y: Vec<f64>) -> Result<ReactorState> {
        if !(m > 0.0) || !(t > 0.0) {
            return Err(Error::invalid("reactor state", format!("m = {m}, T = {t}")));
        }
        let total: f64 = y.iter().sum();
        if y.iter().any(|&v| !(v >= 0.0)) || (total - 1.0).abs() >= 1e-9 {
            return Err(Error::invalid("reactor state", format!("mass fractions sum to {total}")));
        }
        Ok(ReactorState { m, t, y })
    }

    /// State vector `(m, Y.., T)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.y.len() + 2);
        v.push(self.m);
        v.extend_from_slice(&self.y);
        v.push(self.t);
        v
    }

    pub fn from_slice(v: &[f64]) -> ReactorState {
        ReactorState {
            m: v[0],
            t: v[v.len() - 1],
            y: v[1..v.len() - 1].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives<R> {
    pub dm: R,
    pub dy: Vec<R>,
    pub dt: R,
}

impl ReactorConfig {
    pub fn new(v: f64, inlets: Vec<Inlet>, outlet: Outlet, mech: Mechanism) -> Result<ReactorConfig> {
        if !(v > 0.0) {
            return Err(Error::invalid("reactor", format!("volume {v}")));
        }
        if !(outlet.k_v >= 0.0) {
            return Err(Error::invalid("outlet", format!("valve coefficient {}", outlet.k_v)));
        }
        Ok(ReactorConfig {
            v,
            inlets,
            outlet,
            mech,
        })
    }

    pub fn n_species(&self) -> usize {
        self.mech.n_species()
    }

    /// State of mass `m = pVW/(R_u·T)` at the given pressure.
    pub fn state_at_pressure(&self, p: f64, t: f64, y: Vec<f64>) -> Result<ReactorState> {
        let w = mean_molecular_weight(&self.mech.species, &y);
        ReactorState::new(p * self.v * w / (R_U * t), t, y)
    }

    pub fn pressure<R: Real>(&self, m: R, t: R, y: &[R]) -> R {
        let w = mean_molecular_weight(&self.mech.species, y);
        m * t * R_U / (w * self.v)
    }

    pub fn inflow(&self, time: f64) -> f64 {
        self.inlets.iter().map(|i| i.mdot.at(time)).sum()
    }

    /// `ṁ_out = K_v·max(0, p − p_ambient)`.
    pub fn outflow_rate(&self, state: &ReactorState) -> f64 {
        let p = self.pressure(state.m, state.t, &state.y);
        self.outflow_at(p)
    }

    fn outflow_at<R: Real>(&self, p: R) -> R {
        if self.outlet.k_v == 0.0 {
            return R::cst(0.0);
        }
        (p - self.outlet.p_ambient).relu() * self.outlet.k_v
    }

    /// Time derivatives of `(m, Y, T)` with deposition `qdot` (W, ≥ 0).
    #[allow(clippy::too_many_arguments)]
    pub fn rhs<R: Real>(
        &self,
        m: R,
        t: R,
        y: &[R],
        time: f64,
        qdot: R,
        a_over: Option<&[R]>,
        e_over: Option<&[R]>,
    ) -> Result<Derivatives<R>> {
        let sp = &self.mech.species;
        let n = sp.len();
        let zero = R::cst(0.0);

        let mut inv_w = zero;
        let mut cv = zero;
        let mut u_mass = Vec::with_capacity(n);
        let mut u_mole = Vec::with_capacity(n);
        for (s, &yk) in sp.iter().zip(y) {
            let (cp_k, u_k) = s.cp_u_mole(t)?;
            let yw = yk / s.w;
            inv_w = inv_w + yw;
            cv = cv + yw * (cp_k - R_U);
            u_mole.push(u_k);
            u_mass.push(u_k / s.w);
        }
        let rho = m / self.v;
        let p = rho * t * inv_w * R_U;
        let x: Vec<R> = sp.iter().zip(y).map(|(s, &yk)| rho * yk / s.w).collect();
        let wdot = net_production_rates(&self.mech, &x, t, a_over, e_over)?;

        let m_out = self.outflow_at(p);
        let mut m_in_total = 0.0;
        let mut dy_num: Vec<R> = (0..n).map(|k| wdot[k] * (self.v * sp[k].w)).collect();
        let mut e_num = qdot - m_out * p * self.v / m;
        for inlet in &self.inlets {
            let mi = inlet.mdot.at(time);
            if mi == 0.0 {
                continue;
            }
            m_in_total += mi;
            let mut u_in = zero;
            for k in 0..n {
                let yin = inlet.y_in[k];
                dy_num[k] = dy_num[k] + (R::cst(yin) - y[k]) * mi;
                if yin != 0.0 {
                    u_in = u_in + u_mass[k] * yin;
                }
            }
            e_num = e_num + (R::cst(inlet.h_in) - u_in) * mi;
        }
        for k in 0..n {
            e_num = e_num - wdot[k] * u_mole[k] * self.v;
        }
        let dm = -m_out + m_in_total;
        let inv_m = R::cst(1.0) / m;
        let dy = dy_num.into_iter().map(|d| d * inv_m).collect();
        let dt = e_num / (m * cv);
        Ok(Derivatives { dm, dy, dt })
    }

    /// [`ReactorConfig::rhs`] over a packed state vector.
    pub fn rhs_vec<R: Real>(
        &self,
        time: f64,
        s: &[R],
        qdot: R,
        a_over: Option<&[R]>,
        e_over: Option<&[R]>,
    ) -> Result<Vec<R>> {
        let n = s.len();
        let d = self.rhs(s[0], s[n - 1], &s[1..n - 1], time, qdot, a_over, e_over)?;
        let mut out = Vec::with_capacity(n);
        out.push(d.dm);
        out.extend(d.dy);
        out.push(d.dt);
        Ok(out)
    }

    /// Packed states at every node of `grid` using `substeps` RK4 steps per interval.
    pub fn integrate<R: Real>(
        &self,
        s0: &[R],
        grid: &TimeGrid,
        substeps: usize,
        heat: impl Fn(f64) -> R,
        a_over: Option<&[R]>,
        e_over: Option<&[R]>,
    ) -> Result<Vec<Vec<R>>> {
        integrate_substeps(
            |time, s: &[R]| self.rhs_vec(time, s, heat(time), a_over, e_over),
            s0,
            grid,
            substeps,
        )
    }

    /// Fixed-step RK4 over the grid with deposition `heat(t)` in W.
    pub fn simulate(
        &self,
        state0: &ReactorState,
        grid: &TimeGrid,
        heat: impl Fn(f64) -> f64,
        a_over: Option<&[f64]>,
        e_over: Option<&[f64]>,
    ) -> Result<Trajectory> {
        self.simulate_substeps(state0, grid, 1, heat, a_over, e_over)
    }

    pub fn simulate_substeps(
        &self,
        state0: &ReactorState,
        grid: &TimeGrid,
        substeps: usize,
        heat: impl Fn(f64) -> f64,
        a_over: Option<&[f64]>,
        e_over: Option<&[f64]>,
    ) -> Result<Trajectory> {
        let states = self.integrate(&state0.to_vec(), grid, substeps, heat, a_over, e_over)?;
        Ok(self.trajectory(grid, &states))
    }

    /// Builds a [`Trajectory`] from packed states on `grid`.
    pub fn trajectory(&self, grid: &TimeGrid, states: &[Vec<f64>]) -> Trajectory {
        let n = self.n_species();
        let mut tr = Trajectory {
            species: self.mech.species.iter().map(|s| s.name.clone()).collect(),
            ..Default::default()
        };
        for (i, s) in states.iter().enumerate() {
            let time = grid.time(i);
            let (m, t, y) = (s[0], s[n + 1], &s[1..n + 1]);
            let p = self.pressure(m, t, y);
            tr.t.push(time);
            tr.m.push(m);
            tr.temp.push(t);
            tr.p.push(p);
            tr.y.push(y.to_vec());
            tr.mdot_in.push(self.inflow(time));
            tr.mdot_out.push(self.outflow_at(p));
        }
        tr
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub species: Vec<String>,
    pub t: Vec<f64>,
    pub m: Vec<f64>,
    #[serde(rename = "T")]
    pub temp: Vec<f64>,
    pub p: Vec<f64>,
    #[serde(rename = "Y")]
    pub y: Vec<Vec<f64>>,
    pub mdot_in: Vec<f64>,
    pub mdot_out: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn final_temperature(&self) -> f64 {
        *self.temp.last().expect("empty trajectory")
    }

    /// Mass-fraction history of one species.
    pub fn species_series(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.species.iter().position(|s| s == name)?;
        Some(self.y.iter().map(|y| y[k]).collect())
    }

    /// `m(t_end) − m(0) − ∫(ṁ_in − ṁ_out)dt` with composite Simpson
    /// quadrature on the trajectory's own nodes (trapezoid for the last
    /// interval when the count is odd).
    pub fn mass_audit(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let f: Vec<f64> = self.mdot_in.iter().zip(&self.mdot_out).map(|(a, b)| a - b).collect();
        let mut integral = 0.0;
        let mut i = 0;
        while i + 2 < n {
            let h = self.t[i + 2] - self.t[i];
            integral += h / 6.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
            i += 2;
        }
        if i + 1 < n {
            integral += 0.5 * (self.t[i + 1] - self.t[i]) * (f[i] + f[i + 1]);
        }
        self.m[n - 1] - self.m[0] - integral
    }

    /// Columns `t, m, T, p, Y_<species>...`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,m,T,p");
        for s in &self.species {
            let _ = write!(out, ",Y_{s}");
        }
        out.push('\n');
        for i in 0..self.len() {
            let _ = write!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.t[i], self.m[i], self.temp[i], self.p[i]
            );
            for y in &self.y[i] {
                let _ = write!(out, ",{y:.16e}");
            }
            out.push('\n');
        }
        out
    }
}
