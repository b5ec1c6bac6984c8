//! Parameterized neural ODE: the reactor equations with a learned heat source
//! and learned Arrhenius constants, trained end to end through RK4.
//!
//! `shape_net(t, η)` gives the temporal shape of the deposition, `param_net(η)`
//! gives three heads: total energy, a log-scale for `A` and one for `E`.

use std::cell::RefCell;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::datagen::{Dataset, Sample, N_PARAMS, RANGES};
use crate::error::{Error, Result};
use crate::neural::{forward, MlpParams, MlpSpec};
use crate::odeint::TimeGrid;
use crate::optim::{minimize_with, LbfgsOptions, OptResult, Status};
use crate::reactor::{ReactorConfig, ReactorState, Trajectory};
use crate::real::Real;
use crate::scenario::Scenario;

pub use crate::datagen::LaserParams;

pub const A_CLIP: f64 = 3.0;
pub const E_CLIP: f64 = 1.0;

static CLIP_EVENTS: AtomicU64 = AtomicU64::new(0);

/// Process-wide count of model evaluations where an Arrhenius clip was active.
pub fn clip_events() -> u64 {
    CLIP_EVENTS.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnodeModel {
    pub shape_net: MlpParams,
    pub param_net: MlpParams,
    #[serde(rename = "A0")]
    pub a0: f64,
    #[serde(rename = "E0")]
    pub e0: f64,
    pub grid: TimeGrid,
    pub alpha_loss: f64,
    /// Energy unit of the total-heat head, J.
    pub heat_scale: f64,
    /// RK4 steps per grid interval.
    pub substeps: usize,
    /// The time input is `time_gain·(τ − ½)` with `τ ∈ [0, 1]` across the grid.
    /// A wide input range lets tanh units resolve pulses a few steps long.
    pub time_gain: f64,
    /// Min-max ranges used to scale η before it enters either network.
    pub ranges: [(f64, f64); N_PARAMS],
}

/// What the networks say about one η.
#[derive(Debug, Clone)]
pub struct Closure<R> {
    /// Deposition rate at each grid node, W.
    pub heat: Vec<R>,
    /// Total deposited energy, J.
    pub c: R,
    pub a: R,
    pub e: R,
    pub clipped: bool,
}

impl PnodeModel {
    /// Fresh model with `hidden` tanh layers in both networks. The param_net
    /// output layer starts at zero so the kinetics start at `(a0, e0)`.
    pub fn new(hidden: &[usize], grid: TimeGrid, a0: f64, e0: f64, seed: u64) -> Result<PnodeModel> {
        grid.validate()?;
        let shape = MlpSpec::with_hidden(1 + N_PARAMS, hidden, 1)?;
        let param = MlpSpec::with_hidden(N_PARAMS, hidden, 3)?;
        let shape_net = MlpParams::init(&shape, seed);
        let mut param_net = MlpParams::init(&param, seed.wrapping_add(1));
        let last = param.n_layers() - 1;
        param_net.weights_mut(last).fill(0.0);
        param_net.bias_mut(last).fill(0.0);
        let m = PnodeModel {
            shape_net,
            param_net,
            a0,
            e0,
            grid,
            alpha_loss: 1e7,
            heat_scale: 1e5,
            substeps: 1,
            time_gain: 8.0,
            ranges: RANGES,
        };
        m.validate()?;
        Ok(m)
    }

    /// Model matching a scenario's grid and single-step mechanism.
    pub fn for_scenario(scenario: &Scenario, hidden: &[usize], seed: u64) -> Result<PnodeModel> {
        let rxn = scenario
            .mech
            .reactions
            .first()
            .ok_or_else(|| Error::invalid("model", "mechanism has no reactions"))?;
        PnodeModel::new(hidden, scenario.grid, rxn.a, rxn.e, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a0 > 0.0 && self.e0 > 0.0) {
            return Err(Error::invalid("model", "A0 and E0 must be positive"));
        }
        if !(self.alpha_loss >= 0.0) || !(self.heat_scale > 0.0) || self.substeps == 0 || !(self.time_gain > 0.0) {
            return Err(Error::invalid("model", "alpha_loss ≥ 0, heat_scale > 0, time_gain > 0, substeps ≥ 1 required"));
        }
        if self.shape_net.spec.n_inputs() != 1 + N_PARAMS || self.shape_net.spec.n_outputs() != 1 {
            return Err(Error::invalid("model", "shape_net must map 7 inputs to 1 output"));
        }
        if self.param_net.spec.n_inputs() != N_PARAMS || self.param_net.spec.n_outputs() != 3 {
            return Err(Error::invalid("model", "param_net must map 6 inputs to 3 outputs"));
        }
        if self.ranges.iter().any(|(lo, hi)| !(hi > lo)) {
            return Err(Error::invalid("model", "empty scaling range"));
        }
        self.grid.validate()
    }

    pub fn n_params(&self) -> usize {
        self.shape_net.params.len() + self.param_net.params.len()
    }

    /// Flat `θ ∥ ξ`: shape_net parameters, then param_net parameters.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.shape_net.flatten();
        v.extend_from_slice(&self.param_net.params);
        v
    }

    pub fn with_flat_params(&self, flat: &[f64]) -> Result<PnodeModel> {
        let ns = self.shape_net.params.len();
        if flat.len() != self.n_params() {
            return Err(Error::invalid(
                "model parameters",
                format!("expected {} values, got {}", self.n_params(), flat.len()),
            ));
        }
        let mut m = self.clone();
        m.shape_net = MlpParams::unflatten(&self.shape_net.spec, &flat[..ns])?;
        m.param_net = MlpParams::unflatten(&self.param_net.spec, &flat[ns..])?;
        Ok(m)
    }

    pub fn scale(&self, eta: &LaserParams) -> [f64; N_PARAMS] {
        let a = eta.to_array();
        std::array::from_fn(|i| (a[i] - self.ranges[i].0) / (self.ranges[i].1 - self.ranges[i].0))
    }

    /// Network outputs over parameters `p` in flat layout.
    pub fn closure<R: Real>(&self, p: &[R], eta: &LaserParams) -> Closure<R> {
        let ns = self.shape_net.params.len();
        let (ps, pp) = p.split_at(ns);
        let z = self.scale(eta);
        let zr: Vec<R> = z.iter().map(|&v| R::cst(v)).collect();

        let head = forward(&self.param_net.spec, pp, &zr);
        let (c_raw, a_raw, e_raw) = (head[0], head[1], head[2]);
        let c = c_raw.softplus() * self.heat_scale;
        let clipped = a_raw.value().abs() > A_CLIP || e_raw.value().abs() > E_CLIP;
        let a = a_raw.clamp(-A_CLIP, A_CLIP).exp() * self.a0;
        let e = e_raw.clamp(-E_CLIP, E_CLIP).exp() * self.e0;

        let span = self.grid.t_end() - self.grid.t0;
        let mut input = vec![R::cst(0.0); 1 + N_PARAMS];
        input[1..].copy_from_slice(&zr);
        let raw: Vec<R> = self
            .grid
            .times()
            .iter()
            .map(|&t| {
                input[0] = R::cst(self.time_gain * ((t - self.grid.t0) / span - 0.5));
                forward(&self.shape_net.spec, ps, &input)[0].softplus()
            })
            .collect();
        let total = self.grid.trapz(&raw);
        let k = c / total;
        let heat = raw.into_iter().map(|q| q * k).collect();
        Closure { heat, c, a, e, clipped }
    }

    /// Deposition rate at the grid nodes, W.
    pub fn heat_profile(&self, eta: &LaserParams) -> Vec<f64> {
        self.closure(&self.flat_params(), eta).heat
    }

    /// `(A, E)` after the clipped log-scale transforms.
    pub fn effective_arrhenius(&self, eta: &LaserParams) -> (f64, f64) {
        let cl = self.closure(&self.flat_params(), eta);
        (cl.a, cl.e)
    }

    /// Packed states at every grid node under parameters `p`.
    fn states<R: Real>(
        &self,
        p: &[R],
        eta: &LaserParams,
        config: &ReactorConfig,
        state0: &ReactorState,
    ) -> Result<(Vec<Vec<R>>, bool)> {
        let cl = self.closure(p, eta);
        if cl.clipped {
            CLIP_EVENTS.fetch_add(1, Ordering::Relaxed);
        }
        let nr = config.mech.reactions.len();
        let a = vec![cl.a; nr];
        let e = vec![cl.e; nr];
        let s0: Vec<R> = state0.to_vec().into_iter().map(R::cst).collect();
        let grid = self.grid;
        let states = config.integrate(&s0, &grid, self.substeps, |t| grid.interp(&cl.heat, t), Some(&a), Some(&e))?;
        Ok((states, cl.clipped))
    }

    pub fn predict(&self, eta: &LaserParams, config: &ReactorConfig, state0: &ReactorState) -> Result<Trajectory> {
        let (states, _) = self
            .states(&self.flat_params(), eta, config, state0)
            .map_err(|e| Error::invalid("prediction", format!("η = {eta:?}: {e}")))?;
        Ok(config.trajectory(&self.grid, &states))
    }

    /// [`PnodeModel::predict`] with the reactor and initial state taken from `scenario`.
    pub fn predict_in(&self, scenario: &Scenario, eta: &LaserParams) -> Result<Trajectory> {
        self.predict(eta, &scenario.config(eta.maf)?, &scenario.initial_state()?)
    }

    pub fn final_temperatures(&self, scenario: &Scenario, etas: &[LaserParams]) -> Result<Vec<f64>> {
        etas.par_iter()
            .enumerate()
            .map(|(i, eta)| {
                self.predict_in(scenario, eta)
                    .map(|tr| tr.final_temperature())
                    .map_err(|e| e.in_sample(i))
            })
            .collect()
    }

    fn check_alignment(&self, data: &Dataset) -> Result<()> {
        if data.grid != self.grid {
            return Err(Error::invalid(
                "dataset",
                format!("observation grid {:?} does not match model grid {:?}", data.grid, self.grid),
            ));
        }
        data.validate()
    }

    fn sample_loss<R: Real>(&self, p: &[R], scenario: &Scenario, sample: &Sample) -> Result<(R, bool)> {
        let eta = sample.params();
        let config = scenario.config(eta.maf)?;
        let state0 = scenario.initial_state()?;
        let k_o2 = config
            .mech
            .index("O2")
            .ok_or_else(|| Error::invalid("mechanism", "no O2 species"))?;
        let n = config.n_species();
        let (states, clipped) = self.states(p, &eta, &config, &state0)?;
        let mut l = R::cst(0.0);
        for (j, s) in states[1..].iter().enumerate() {
            let dt = s[n + 1] - sample.temp[j];
            let dy = s[1 + k_o2] - sample.y_o2[j];
            l = l + dt * dt + dy * dy * self.alpha_loss;
        }
        Ok((l, clipped))
    }

    /// Σ over samples and observations of `ΔT² + α·ΔY_O2²`.
    pub fn loss(&self, scenario: &Scenario, data: &Dataset) -> Result<f64> {
        self.check_alignment(data)?;
        let p = self.flat_params();
        let parts: Vec<f64> = data
            .samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| self.sample_loss(&p, scenario, s).map(|r| r.0).map_err(|e| e.in_sample(i)))
            .collect::<Result<_>>()?;
        Ok(parts.iter().sum())
    }

    /// Loss, its gradient over the flat parameters, and the number of samples
    /// with an active Arrhenius clip. One tape per sample.
    pub fn loss_and_grad(&self, scenario: &Scenario, data: &Dataset) -> Result<(f64, Vec<f64>, usize)> {
        self.check_alignment(data)?;
        let p = self.flat_params();
        let parts: Vec<(f64, Vec<f64>, bool)> = data
            .samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let tape = Tape::new()?;
                let vars = tape.params(&p);
                let (l, clipped) = self.sample_loss(&vars, scenario, s).map_err(|e| e.in_sample(i))?;
                let g = tape.backward(l)?.params();
                if !l.val().is_finite() || g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteGradient { sample: i });
                }
                Ok((l.val(), g, clipped))
            })
            .collect::<Result<_>>()?;
        let mut grad = vec![0.0; p.len()];
        let mut total = 0.0;
        let mut clipped = 0;
        for (l, g, c) in parts {
            total += l;
            clipped += c as usize;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        Ok((total, grad, clipped))
    }

    pub fn grad_loss(&self, scenario: &Scenario, data: &Dataset) -> Result<Vec<f64>> {
        Ok(self.loss_and_grad(scenario, data)?.1)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<PnodeModel> {
        let m: PnodeModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Recorded with the run; training itself is deterministic.
    pub seed: u64,
    /// Iterations with the Arrhenius heads frozen before full training.
    pub kinetics_warmup: usize,
    pub lbfgs: LbfgsOptions,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            max_iters: 100,
            grad_tol: 1e-6,
            seed: 0,
            kinetics_warmup: 30,
            lbfgs: LbfgsOptions {
                first_step: 0.01,
                max_step: 1.0,
                ..LbfgsOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iter: usize,
    pub loss: f64,
    pub grad_inf_norm: f64,
    pub step_length: f64,
    /// Samples whose Arrhenius heads sat outside the clip range.
    pub clipped: usize,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: PnodeModel,
    pub history: Vec<TrainRecord>,
    pub status: Status,
    pub evals: usize,
}

impl TrainReport {
    pub fn log_csv(&self) -> String {
        let mut s = String::from("iter,loss,grad_inf_norm,step_length,clipped\n");
        for r in &self.history {
            s.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{}\n",
                r.iter, r.loss, r.grad_inf_norm, r.step_length, r.clipped
            ));
        }
        s
    }
}

impl PnodeModel {
    /// Flat indices of the param_net output rows that produce `a_raw` and `e_raw`.
    pub fn arrhenius_head_indices(&self) -> Vec<usize> {
        let spec = &self.param_net.spec;
        let last = spec.n_layers() - 1;
        let n_in = spec.layer_sizes[last];
        let base = self.shape_net.params.len() + spec.offset(last);
        let mut idx = Vec::with_capacity(2 * n_in + 2);
        for row in 1..3 {
            idx.extend((0..n_in).map(|k| base + row * n_in + k));
        }
        idx.extend([base + 3 * n_in + 1, base + 3 * n_in + 2]);
        idx
    }
}

/// L-BFGS over the flat parameters. Evaluations that fail to integrate count
/// as infinite loss so the line search steps back.
///
/// The first `opts.kinetics_warmup` iterations hold the Arrhenius heads fixed
/// and fit only the heat source; the rest train everything.
pub fn train(
    model: &PnodeModel,
    scenario: &Scenario,
    data: &Dataset,
    opts: &TrainOptions,
    mut progress: impl FnMut(&TrainRecord),
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::invalid("training", "dataset is empty"));
    }
    model.check_alignment(data)?;
    let frozen = model.arrhenius_head_indices();
    let warmup = opts.kinetics_warmup.min(opts.max_iters);
    let mut x = model.flat_params();
    let mut history: Vec<TrainRecord> = Vec::new();
    let mut evals = 0;
    let mut status = Status::MaxIters;
    let phases = [(warmup, true), (opts.max_iters - warmup, false)];
    for (k, &(iters, freeze)) in phases.iter().enumerate() {
        if iters == 0 && !(k == 1 && history.is_empty()) {
            continue;
        }
        let mut lb = opts.lbfgs;
        lb.max_iters = iters;
        lb.grad_tol = opts.grad_tol;
        let mask = if freeze { Some(frozen.as_slice()) } else { None };
        // The second phase starts where the first stopped; its start record is a repeat.
        let resumed = !history.is_empty();
        let offset = history.last().map_or(0, |r| r.iter);
        let (res, err) = run_phase(model, scenario, data, &x, &lb, mask, |mut r| {
            if resumed && r.iter == 0 {
                return;
            }
            r.iter += offset;
            progress(&r);
            history.push(r);
        });
        evals += res.evals;
        if res.status == Status::BadStart {
            return Err(err.unwrap_or_else(|| Error::invalid("training", "initial loss is not finite")));
        }
        x = res.x;
        status = res.status;
        // A converged warm-up still hands over to the full phase.
        if !freeze && status != Status::MaxIters {
            break;
        }
    }
    Ok(TrainReport {
        model: model.with_flat_params(&x)?,
        history,
        status,
        evals,
    })
}

fn run_phase(
    model: &PnodeModel,
    scenario: &Scenario,
    data: &Dataset,
    x0: &[f64],
    lb: &LbfgsOptions,
    mask: Option<&[usize]>,
    mut record: impl FnMut(TrainRecord),
) -> (OptResult, Option<Error>) {
    // Clip counts of the evaluations since the last accepted step, so the
    // log can report the one for the accepted point.
    let clips: RefCell<Vec<(Vec<f64>, usize)>> = RefCell::new(Vec::new());
    let first_err: RefCell<Option<Error>> = RefCell::new(None);
    let objective = |x: &[f64]| {
        let m = model.with_flat_params(x).ok()?;
        match m.loss_and_grad(scenario, data) {
            Ok((l, mut g, c)) => {
                for &i in mask.unwrap_or(&[]) {
                    g[i] = 0.0;
                }
                clips.borrow_mut().push((x.to_vec(), c));
                Some((l, g))
            }
            Err(e) => {
                first_err.borrow_mut().get_or_insert(e);
                None
            }
        }
    };
    let result = minimize_with(objective, x0, lb, |rec, x| {
        let clipped = clips
            .borrow()
            .iter()
            .rev()
            .find(|(p, _)| p == x)
            .map_or(0, |(_, c)| *c);
        clips.borrow_mut().clear();
        record(TrainRecord {
            iter: rec.iter,
            loss: rec.loss,
            grad_inf_norm: rec.grad_inf,
            step_length: rec.step,
            clipped,
        });
    });
    (result, first_err.into_inner())
}
