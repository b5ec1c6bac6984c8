//! Synthetic reference data: a reactor driven by a known laser-deposition
//! law over the six ignition parameters.
//!
//! The deposited energy is a smooth function of the parameters; whether the
//! mixture ignites is decided by the chemistry's thermal runaway, so the
//! final-temperature map is sharp without being painted in.

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::odeint::TimeGrid;
use crate::reactor::Trajectory;
use crate::scenario::Scenario;

pub const N_PARAMS: usize = 6;
pub const PARAM_NAMES: [&str; N_PARAMS] = ["x", "y", "amplitude", "radius", "duration", "maf"];
/// Sampling intervals for each parameter, in `PARAM_NAMES` order.
pub const RANGES: [(f64, f64); N_PARAMS] = [(0.0, 7.0), (0.0, 1.0), (0.0, 0.08), (0.0, 0.5), (0.0, 1.0), (0.0, 0.02)];

/// Final temperature above which a run counts as ignited, K.
pub const IGNITION_THRESHOLD: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserParams {
    pub x: f64,
    pub y: f64,
    pub amplitude: f64,
    pub radius: f64,
    pub duration: f64,
    pub maf: f64,
}

impl LaserParams {
    pub fn from_array(a: [f64; N_PARAMS]) -> LaserParams {
        LaserParams {
            x: a[0],
            y: a[1],
            amplitude: a[2],
            radius: a[3],
            duration: a[4],
            maf: a[5],
        }
    }

    pub fn to_array(&self) -> [f64; N_PARAMS] {
        [self.x, self.y, self.amplitude, self.radius, self.duration, self.maf]
    }

    /// Components min-max scaled to `[0, 1]` by `RANGES`.
    pub fn scaled(&self) -> [f64; N_PARAMS] {
        let a = self.to_array();
        std::array::from_fn(|i| (a[i] - RANGES[i].0) / (RANGES[i].1 - RANGES[i].0))
    }

    pub fn in_range(&self) -> bool {
        self.to_array()
            .iter()
            .zip(RANGES)
            .all(|(v, (lo, hi))| *v >= lo && *v <= hi)
    }

    /// The reference ignition case; also the defaults for inactive dimensions.
    pub fn reference(law: &OracleLaw) -> LaserParams {
        LaserParams {
            x: law.x_opt,
            y: law.y_opt(law.x_opt),
            amplitude: 0.08,
            radius: 0.25,
            duration: 0.5,
            maf: 0.0,
        }
    }
}

/// Parses a comma-separated list of parameter names.
pub fn parse_dims(s: &str) -> Result<Vec<usize>> {
    let mut dims = Vec::new();
    for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
        let key = name.to_ascii_lowercase();
        let i = PARAM_NAMES
            .iter()
            .position(|&p| p == key)
            .ok_or_else(|| Error::invalid("dims", format!("unknown parameter {name:?}")))?;
        if dims.contains(&i) {
            return Err(Error::invalid("dims", format!("{name} listed twice")));
        }
        dims.push(i);
    }
    if dims.is_empty() {
        return Err(Error::invalid("dims", "no parameters given"));
    }
    Ok(dims)
}

pub fn dim_names(dims: &[usize]) -> Vec<String> {
    dims.iter().map(|&d| PARAM_NAMES[d].to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleLaw {
    /// J
    pub q_scale: f64,
    pub x_opt: f64,
    pub y_opt_mean: f64,
    pub y_opt_amp: f64,
    pub sigma_x: f64,
    pub r0: f64,
    /// s
    pub t0: f64,
    /// s
    pub sigma_t0: f64,
    pub maf_penalty: f64,
}

impl OracleLaw {
    pub fn y_opt(&self, x: f64) -> f64 {
        self.y_opt_mean + self.y_opt_amp * x.sin()
    }

    /// Total deposited energy, J.
    pub fn e_tot(&self, eta: &LaserParams) -> f64 {
        let dx = eta.x - self.x_opt;
        let dy = eta.y - self.y_opt(eta.x);
        let sy = self.r0 + eta.radius;
        self.q_scale
            * eta.amplitude
            * (-dx * dx / (2.0 * self.sigma_x * self.sigma_x)).exp()
            * (-dy * dy / (2.0 * sy * sy)).exp()
            * (1.0 - self.maf_penalty * eta.maf / RANGES[5].1)
    }

    pub fn sigma_t(&self, eta: &LaserParams) -> f64 {
        self.sigma_t0 * (0.25 + eta.duration)
    }

    /// Deposition rate at the grid nodes, W. The Gaussian pulse is sampled on
    /// the grid and rescaled so its trapezoidal integral is exactly `E_tot`.
    pub fn deposition_nodes(&self, eta: &LaserParams, grid: &TimeGrid) -> Vec<f64> {
        let e = self.e_tot(eta);
        let s = self.sigma_t(eta);
        let g: Vec<f64> = grid
            .times()
            .iter()
            .map(|t| (-(t - self.t0).powi(2) / (2.0 * s * s)).exp())
            .collect();
        let mass = grid.trapz(&g);
        if e == 0.0 || mass == 0.0 {
            return vec![0.0; g.len()];
        }
        g.iter().map(|v| e * v / mass).collect()
    }

    /// Deposition rate at time `t`, linear between grid nodes.
    pub fn deposition(&self, eta: &LaserParams, grid: &TimeGrid, t: f64) -> f64 {
        grid.interp(&self.deposition_nodes(eta, grid), t)
    }
}

/// The reference integrator over a scenario.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub scenario: Scenario,
}

impl Oracle {
    pub fn new(scenario: Scenario) -> Oracle {
        Oracle { scenario }
    }

    pub fn builtin() -> Oracle {
        Oracle::new(Scenario::builtin())
    }

    pub fn law(&self) -> OracleLaw {
        self.scenario.oracle.law
    }

    pub fn grid(&self) -> TimeGrid {
        self.scenario.grid
    }

    pub fn trajectory(&self, eta: &LaserParams) -> Result<Trajectory> {
        let grid = self.scenario.grid;
        let config = self.scenario.config(eta.maf)?;
        let s0 = self.scenario.initial_state()?;
        let q = self.law().deposition_nodes(eta, &grid);
        config
            .simulate_substeps(&s0, &grid, self.scenario.oracle.substeps, |t| grid.interp(&q, t), None, None)
            .map_err(|e| Error::invalid("oracle calibration", format!("trajectory for {eta:?} failed: {e}")))
    }

    pub fn final_temperature(&self, eta: &LaserParams) -> Result<f64> {
        Ok(self.trajectory(eta)?.final_temperature())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub eta: [f64; N_PARAMS],
    /// Temperature at each observation time, K.
    #[serde(rename = "T")]
    pub temp: Vec<f64>,
    #[serde(rename = "Y_O2")]
    pub y_o2: Vec<f64>,
}

impl Sample {
    pub fn params(&self) -> LaserParams {
        LaserParams::from_array(self.eta)
    }

    pub fn final_temperature(&self) -> f64 {
        *self.temp.last().expect("sample without observations")
    }

    pub fn from_trajectory(eta: &LaserParams, tr: &Trajectory) -> Sample {
        let k = tr.species.iter().position(|s| s == "O2").expect("mechanism has O2");
        Sample {
            eta: eta.to_array(),
            temp: tr.temp[1..].to_vec(),
            y_o2: tr.y[1..].iter().map(|y| y[k]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub seed: u64,
    pub scenario: String,
    pub grid: TimeGrid,
    #[serde(default)]
    pub dims: Vec<String>,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Observation times: every grid node after the initial one.
    pub fn times(&self) -> Vec<f64> {
        self.grid.times()[1..].to_vec()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// First `n` samples and the rest, in file order.
    pub fn split(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.samples.len());
        let mut a = self.clone();
        let mut b = self.clone();
        a.samples.truncate(n);
        b.samples.drain(..n);
        (a, b)
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut d = self.clone();
        d.samples = idx.iter().map(|&i| self.samples[i].clone()).collect();
        d
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        for (i, s) in self.samples.iter().enumerate() {
            if s.temp.len() != self.grid.n_steps || s.y_o2.len() != self.grid.n_steps {
                return Err(Error::invalid(
                    "dataset",
                    format!("sample {i}: expected {} observations", self.grid.n_steps),
                ));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("dataset serializes")
    }

    pub fn from_json(text: &str) -> Result<Dataset> {
        let d: Dataset = serde_json::from_str(text)?;
        d.validate()?;
        Ok(d)
    }
}

fn sample_rng(seed: u64, index: usize) -> SplitMix64 {
    let mut root = SplitMix64::seed_from_u64(seed);
    let stream: u64 = root.gen::<u64>() ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    SplitMix64::seed_from_u64(stream)
}

/// Parameter draws only. Inactive dimensions take `defaults`.
pub fn sample_params(n: usize, seed: u64, dims: &[usize], defaults: &LaserParams) -> Vec<LaserParams> {
    (0..n)
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let mut a = defaults.to_array();
            for d in 0..N_PARAMS {
                let u: f64 = rng.gen();
                if dims.contains(&d) {
                    let (lo, hi) = RANGES[d];
                    a[d] = lo + (hi - lo) * u;
                }
            }
            LaserParams::from_array(a)
        })
        .collect()
}

/// Draws `n` parameter vectors and runs the oracle on each, in parallel.
pub fn sample_dataset(oracle: &Oracle, n: usize, seed: u64, dims: &[usize]) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("dataset", "n must be at least 1"));
    }
    let defaults = LaserParams::reference(&oracle.law());
    let etas = sample_params(n, seed, dims, &defaults);
    let samples = trajectories(oracle, &etas)?
        .iter()
        .zip(&etas)
        .map(|(tr, eta)| Sample::from_trajectory(eta, tr))
        .collect();
    Ok(Dataset {
        seed,
        scenario: oracle.scenario.id().to_string(),
        grid: oracle.grid(),
        dims: dim_names(dims),
        samples,
    })
}

pub fn trajectories(oracle: &Oracle, etas: &[LaserParams]) -> Result<Vec<Trajectory>> {
    etas.par_iter()
        .enumerate()
        .map(|(i, eta)| oracle.trajectory(eta).map_err(|e| e.in_sample(i)))
        .collect()
}

/// `resolution²` parameter vectors over two dimensions, endpoints included.
/// Entry `i·resolution + j` has `dims.0` at level `i` and `dims.1` at level `j`.
pub fn sweep_grid(dims: (usize, usize), fixed: &LaserParams, resolution: usize) -> Result<Vec<LaserParams>> {
    if dims.0 == dims.1 || dims.0 >= N_PARAMS || dims.1 >= N_PARAMS {
        return Err(Error::invalid("sweep", "need two distinct parameters"));
    }
    if resolution < 2 {
        return Err(Error::invalid("sweep", "resolution must be at least 2"));
    }
    let level = |d: usize, k: usize| {
        let (lo, hi) = RANGES[d];
        if k == resolution - 1 {
            hi
        } else {
            lo + (hi - lo) * k as f64 / (resolution - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            let mut a = fixed.to_array();
            a[dims.0] = level(dims.0, i);
            a[dims.1] = level(dims.1, j);
            out.push(LaserParams::from_array(a));
        }
    }
    Ok(out)
}

/// Fraction of values strictly inside `(lo, hi)`.
pub fn band_fraction(values: &[f64], lo: f64, hi: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| v > lo && v < hi).count() as f64 / values.len() as f64
}
