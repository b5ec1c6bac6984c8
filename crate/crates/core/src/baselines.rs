//! Surrogates that map η straight to the final temperature, and the DBSCAN
//! stratification used to see where along the ignition boundary errors sit.
//!
//! All inputs are η rows min-max scaled to `[0, 1]` by the sampling ranges.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::datagen::{LaserParams, IGNITION_THRESHOLD};
use crate::error::{Error, Result};
use crate::neural::{forward, MlpParams, MlpSpec};
use crate::optim::{minimize, LbfgsOptions, Status};

/// Scaled rows for a list of parameter vectors.
pub fn scaled_rows(etas: &[LaserParams]) -> Vec<Vec<f64>> {
    etas.iter().map(|e| e.scaled().to_vec()).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_rows(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::invalid("training data", format!("{} rows, {} targets", x.len(), y.len())));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("training data", "ragged rows or non-finite targets"));
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrrModel {
    pub x_train: Vec<Vec<f64>>,
    pub dual_weights: Vec<f64>,
    pub ridge: f64,
    pub gamma: f64,
}

pub const KRR_RIDGE: f64 = 2.0;
pub const KRR_GAMMA: f64 = 1.0;

/// Solves `(K + ridge·I) w = y` with the RBF kernel `exp(−γ‖x − x'‖²)`.
/// Exactly repeated rows are merged and their targets averaged.
pub fn krr_fit(x: &[Vec<f64>], y: &[f64], ridge: f64, gamma: f64) -> Result<KrrModel> {
    check_rows(x, y)?;
    if !(ridge > 0.0) || !(gamma > 0.0) {
        return Err(Error::invalid("kernel ridge", "ridge and gamma must be positive"));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for (r, &t) in x.iter().zip(y) {
        match rows.iter().position(|q| q == r) {
            Some(i) => {
                sums[i].0 += t;
                sums[i].1 += 1;
            }
            None => {
                rows.push(r.clone());
                sums.push((t, 1));
            }
        }
    }
    let n = rows.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        let v = (-gamma * sq_dist(&rows[i], &rows[j])).exp();
        if i == j {
            v + ridge
        } else {
            v
        }
    });
    let rhs = DVector::from_iterator(n, sums.iter().map(|(s, c)| s / *c as f64));
    let chol = k
        .cholesky()
        .ok_or_else(|| Error::invalid("kernel ridge", "kernel matrix is not positive definite"))?;
    let w = chol.solve(&rhs);
    Ok(KrrModel {
        x_train: rows,
        dual_weights: w.iter().copied().collect(),
        ridge,
        gamma,
    })
}

impl KrrModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.x_train
            .iter()
            .zip(&self.dual_weights)
            .map(|(xi, w)| w * (-self.gamma * sq_dist(x, xi)).exp())
            .sum()
    }

    pub fn predict_rows(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|r| self.predict(r)).collect()
    }
}

/// Output scaling for the direct network: `(T − T_OFFSET)/T_SPAN`.
pub const T_OFFSET: f64 = 350.0;
pub const T_SPAN: f64 = 1050.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnRegressor {
    pub net: MlpParams,
    pub status: Status,
    pub iterations: usize,
}

/// Fits an MLP on scaled rows by L-BFGS on the mean squared error of the
/// scaled targets.
pub fn nn_regress_fit(
    x: &[Vec<f64>],
    y: &[f64],
    hidden: &[usize],
    seed: u64,
    max_iters: usize,
) -> Result<NnRegressor> {
    nn_regress_fit_with(x, y, hidden, seed, &LbfgsOptions {
        max_iters,
        grad_tol: 1e-10,
        ..LbfgsOptions::default()
    })
}

pub fn nn_regress_fit_with(
    x: &[Vec<f64>],
    y: &[f64],
    hidden: &[usize],
    seed: u64,
    opts: &LbfgsOptions,
) -> Result<NnRegressor> {
    let d = check_rows(x, y)?;
    let spec = MlpSpec::with_hidden(d, hidden, 1)?;
    let init = MlpParams::init(&spec, seed);
    let targets: Vec<f64> = y.iter().map(|t| (t - T_OFFSET) / T_SPAN).collect();
    let n = x.len() as f64;
    let objective = |p: &[f64]| -> Option<(f64, Vec<f64>)> {
        let tape = Tape::new().ok()?;
        let w = tape.params(p);
        let mut loss = Var::constant(0.0);
        for (row, &t) in x.iter().zip(&targets) {
            let xr: Vec<_> = row.iter().map(|&v| Var::constant(v)).collect();
            let r = forward(&spec, &w, &xr)[0] - t;
            loss = loss + r * r;
        }
        let loss = loss / n;
        let g = tape.backward(loss).ok()?.params();
        Some((loss.val(), g))
    };
    let res = minimize(objective, &init.params, opts);
    if res.status == Status::BadStart {
        return Err(Error::invalid("network regression", "initial loss is not finite"));
    }
    Ok(NnRegressor {
        net: MlpParams::unflatten(&spec, &res.x)?,
        status: res.status,
        iterations: res.iterations(),
    })
}

impl NnRegressor {
    pub fn predict(&self, x: &[f64]) -> f64 {
        T_OFFSET + T_SPAN * self.net.forward(x)[0]
    }

    pub fn predict_rows(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|r| self.predict(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Core,
    Boundary,
    Noise,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbscanLabels {
    pub kind: Vec<PointKind>,
    /// Cluster ids count up in order of each cluster's lowest-index core point.
    pub cluster: Vec<Option<usize>>,
}

impl DbscanLabels {
    pub fn n_clusters(&self) -> usize {
        self.cluster.iter().flatten().max().map_or(0, |m| m + 1)
    }
}

pub const DBSCAN_EPS: f64 = 0.15;
pub const DBSCAN_MIN_PTS: usize = 5;

/// Uniform-cell index so neighbor queries only scan adjacent cells.
struct CellIndex<'a> {
    points: &'a [Vec<f64>],
    eps: f64,
    cells: HashMap<Vec<i64>, Vec<usize>>,
}

impl<'a> CellIndex<'a> {
    fn new(points: &'a [Vec<f64>], eps: f64) -> Self {
        let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        CellIndex { points, eps, cells }
    }

    fn key(p: &[f64], eps: f64) -> Vec<i64> {
        p.iter().map(|v| (v / eps).floor() as i64).collect()
    }

    /// Indices within `eps` of point `i` (itself included), ascending.
    fn neighbors(&self, i: usize) -> Vec<usize> {
        let p = &self.points[i];
        let base = Self::key(p, self.eps);
        let d = base.len();
        let eps2 = self.eps * self.eps;
        let mut out = Vec::new();
        let mut offset = vec![-1i64; d];
        loop {
            let key: Vec<i64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
            if let Some(members) = self.cells.get(&key) {
                out.extend(members.iter().copied().filter(|&j| sq_dist(p, &self.points[j]) <= eps2));
            }
            // odometer over {-1, 0, 1}^d
            let mut k = 0;
            while k < d {
                offset[k] += 1;
                if offset[k] <= 1 {
                    break;
                }
                offset[k] = -1;
                k += 1;
            }
            if k == d {
                break;
            }
        }
        out.sort_unstable();
        out
    }
}

/// Density clustering. A point is core when at least `min_pts` points
/// (itself included) lie within `eps`; a non-core point within `eps` of a core
/// point is a boundary point and joins the cluster of its nearest core
/// neighbor; everything else is noise.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Result<DbscanLabels> {
    if !(eps > 0.0) || min_pts == 0 {
        return Err(Error::invalid("dbscan", format!("eps = {eps}, min_pts = {min_pts}")));
    }
    let n = points.len();
    let index = CellIndex::new(points, eps);
    let neigh: Vec<Vec<usize>> = (0..n).map(|i| index.neighbors(i)).collect();
    let is_core: Vec<bool> = neigh.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut cluster: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    for start in 0..n {
        if !is_core[start] || cluster[start].is_some() {
            continue;
        }
        let id = next;
        next += 1;
        cluster[start] = Some(id);
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for &j in &neigh[i] {
                if is_core[j] && cluster[j].is_none() {
                    cluster[j] = Some(id);
                    queue.push_back(j);
                }
            }
        }
    }
    let mut kind = vec![PointKind::Noise; n];
    for i in 0..n {
        if is_core[i] {
            kind[i] = PointKind::Core;
            continue;
        }
        let nearest = neigh[i]
            .iter()
            .filter(|&&j| is_core[j])
            .map(|&j| (sq_dist(&points[i], &points[j]), cluster[j].unwrap()))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((_, c)) = nearest {
            kind[i] = PointKind::Boundary;
            cluster[i] = Some(c);
        }
    }
    Ok(DbscanLabels { kind, cluster })
}

/// Runs DBSCAN separately over ignited and non-ignited points (by `truth`)
/// and returns each point's kind in its own pass.
pub fn stratify(points: &[Vec<f64>], truth: &[f64], eps: f64, min_pts: usize) -> Result<Vec<PointKind>> {
    if points.len() != truth.len() {
        return Err(Error::invalid("stratify", "points and temperatures differ in length"));
    }
    let mut kind = vec![PointKind::Noise; points.len()];
    for ignited in [true, false] {
        let idx: Vec<usize> = (0..points.len())
            .filter(|&i| (truth[i] > IGNITION_THRESHOLD) == ignited)
            .collect();
        let sub: Vec<Vec<f64>> = idx.iter().map(|&i| points[i].clone()).collect();
        let labels = dbscan(&sub, eps, min_pts)?;
        for (k, &i) in idx.iter().enumerate() {
            kind[i] = labels.kind[k];
        }
    }
    Ok(kind)
}

/// Ignition outcomes with "ignited" as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub true_ignited: usize,
    pub false_ignited: usize,
    pub true_quenched: usize,
    pub false_quenched: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_ignited + self.false_ignited + self.true_quenched + self.false_quenched
    }

    pub fn accuracy(&self) -> f64 {
        (self.true_ignited + self.true_quenched) as f64 / self.total() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(rename = "MAE")]
    pub mae: f64,
    #[serde(rename = "MRE")]
    pub mre: f64,
    pub confusion: Confusion,
}

pub fn metrics(pred: &[f64], truth: &[f64]) -> Result<Metrics> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::invalid("metrics", format!("{} predictions, {} truths", pred.len(), truth.len())));
    }
    let n = pred.len() as f64;
    let mut mae = 0.0;
    let mut mre = 0.0;
    let mut c = Confusion::default();
    for (&p, &t) in pred.iter().zip(truth) {
        mae += (p - t).abs();
        mre += ((p - t) / t).abs();
        match (p > IGNITION_THRESHOLD, t > IGNITION_THRESHOLD) {
            (true, true) => c.true_ignited += 1,
            (true, false) => c.false_ignited += 1,
            (false, false) => c.true_quenched += 1,
            (false, true) => c.false_quenched += 1,
        }
    }
    Ok(Metrics {
        mae: mae / n,
        mre: mre / n,
        confusion: c,
    })
}
