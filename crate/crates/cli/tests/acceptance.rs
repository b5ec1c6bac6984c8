//! End-to-end acceptance checks, one PASS/FAIL line each. Runs without the
//! libtest harness so the report is printed whether or not a check fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use pnode_core::autodiff::Tape;
use pnode_core::baselines::{
    dbscan, krr_fit, metrics, nn_regress_fit, scaled_rows, stratify, PointKind, DBSCAN_EPS, DBSCAN_MIN_PTS,
    KRR_GAMMA, KRR_RIDGE,
};
use pnode_core::datagen::{
    band_fraction, parse_dims, sample_dataset, sweep_grid, Dataset, LaserParams, Oracle, Sample, IGNITION_THRESHOLD,
    RANGES,
};
use pnode_core::kinetics::Mechanism;
use pnode_core::neural::parse_arch;
use pnode_core::odeint::{integrate, TimeGrid};
use pnode_core::pnode::{train, PnodeModel, TrainOptions};
use pnode_core::reactor::{Outlet, ReactorConfig, Trajectory};
use pnode_core::scenario::Scenario;
use pnode_core::thermo::atomic_weight;
use pnode_core::Real;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [(&str, u64, fn() -> Check); 9] = [
        ("conservation", 10, conservation),
        ("rk4 order", 1, rk4_order),
        ("autodiff", 30, autodiff),
        ("heat normalization", 5, heat_normalization),
        ("single trajectory", 600, single_trajectory),
        ("two-parameter replica", 7200, two_parameter_replica),
        ("six-parameter ordering", 14400, six_parameter_ordering),
        ("baseline oracles", 10, baseline_oracles),
        ("cli determinism", 600, cli_determinism),
    ];
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let k = i + 1;
        if !only.is_empty() && !only.contains(&k) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let result = result.and_then(|detail| {
            if took > Duration::from_secs(*limit) {
                Err(format!("{detail}; took {took:.1?}, limit {limit} s"))
            } else {
                Ok(detail)
            }
        });
        match result {
            Ok(detail) => println!("PASS {k} {name}: {detail} ({took:.1?})"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {k} {name}: {detail} ({took:.1?})");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

// 1 -------------------------------------------------------------------------

fn closed(mech: Mechanism) -> ReactorConfig {
    ReactorConfig::new(1.0, vec![], Outlet { k_v: 0.0, p_ambient: 0.0 }, mech).expect("closed reactor")
}

fn lean_mix(mech: &Mechanism) -> Vec<f64> {
    let mut y = vec![0.0; mech.n_species()];
    y[mech.index("CH4").unwrap()] = 0.03;
    y[mech.index("O2").unwrap()] = 0.2;
    y[mech.index("N2").unwrap()] = 0.77;
    y
}

fn conservation() -> Check {
    let mech = Scenario::builtin().mech;
    let inert = mech.with_arrhenius(&[0.0], &[1e7]);
    let cfg = closed(inert.clone());
    let s0 = cfg.state_at_pressure(101325.0, 900.0, lean_mix(&inert)).map_err(|e| e.to_string())?;
    let grid = TimeGrid::new(0.0, 1e-6, 1000).unwrap();
    let tr = cfg.simulate(&s0, &grid, |_| 0.0, None, None).map_err(|e| e.to_string())?;
    let mut drift = 0.0f64;
    let mut sum_drift = 0.0f64;
    for i in 0..tr.len() {
        drift = drift.max((tr.temp[i] / s0.t - 1.0).abs()).max((tr.m[i] / s0.m - 1.0).abs());
        for (a, b) in tr.y[i].iter().zip(&s0.y) {
            drift = drift.max((a - b).abs());
        }
        sum_drift = sum_drift.max((tr.y[i].iter().sum::<f64>() - 1.0).abs());
    }
    ensure(drift <= 1e-12, || format!("inert state drifted by {drift:e}"))?;
    ensure(sum_drift < 1e-10, || format!("ΣY drifted by {sum_drift:e}"))?;

    let cfg = closed(mech.clone());
    let s0 = cfg.state_at_pressure(101325.0, 1500.0, lean_mix(&mech)).map_err(|e| e.to_string())?;
    let grid = TimeGrid::new(0.0, 1e-7, 1000).unwrap();
    let tr = cfg.simulate(&s0, &grid, |_| 0.0, None, None).map_err(|e| e.to_string())?;
    let elements = |m: f64, y: &[f64]| {
        let mut out: BTreeMap<String, f64> = BTreeMap::new();
        for (s, &yk) in mech.species.iter().zip(y) {
            for (el, &n) in &s.elements {
                *out.entry(el.clone()).or_default() += m * yk * n * atomic_weight(el).unwrap() / s.w;
            }
        }
        out
    };
    let energy = |m: f64, t: f64, y: &[f64]| -> f64 {
        m * mech.species.iter().zip(y).map(|(s, &yk)| yk * s.u_mole(t).unwrap() / s.w).sum::<f64>()
    };
    let e0 = elements(s0.m, &s0.y);
    let u0 = energy(s0.m, s0.t, &s0.y);
    let u_scale = s0.m
        * mech
            .species
            .iter()
            .map(|s| s.u_mole(s0.t).unwrap().abs() / s.w)
            .fold(0.0, f64::max);
    let (mut el_err, mut u_err) = (0.0f64, 0.0f64);
    for i in 0..tr.len() {
        let e = elements(tr.m[i], &tr.y[i]);
        for (k, v) in &e0 {
            el_err = el_err.max((e[k] - v).abs() / v);
        }
        u_err = u_err.max((energy(tr.m[i], tr.temp[i], &tr.y[i]) - u0).abs() / u_scale);
    }
    let burnt = 1.0 - tr.y.last().unwrap()[mech.index("CH4").unwrap()] / 0.03;
    ensure(burnt > 0.5, || format!("only {burnt:.2} of the fuel burnt"))?;
    ensure(el_err < 1e-8, || format!("element drift {el_err:e}"))?;
    ensure(u_err < 1e-6, || format!("energy drift {u_err:e}"))?;
    Ok(format!(
        "inert drift {drift:.1e}, ΣY {sum_drift:.1e}, elements {el_err:.1e}, U {u_err:.1e}"
    ))
}

// 2 -------------------------------------------------------------------------

fn rk4_order() -> Check {
    let err = |n: usize| -> f64 {
        let grid = TimeGrid::new(0.0, 1.0 / n as f64, n).unwrap();
        let ys = integrate(|_, y: &[f64]| Ok(vec![-y[0]]), &[1.0], &grid).unwrap();
        (ys.last().unwrap()[0] - (-1.0f64).exp()).abs()
    };
    let ratio = err(10) / err(20);
    ensure((14.0..=18.0).contains(&ratio), || format!("error ratio {ratio}"))?;
    Ok(format!("error ratio {ratio:.3}"))
}

// 3 -------------------------------------------------------------------------

/// Random expression over `n_in` inputs: each node combines earlier nodes
/// with an op whose domain is the whole real line.
fn eval_graph<R: Real>(plan: &[(u8, usize, usize, f64)], x: &[R]) -> R {
    let mut v: Vec<R> = x.to_vec();
    for &(op, i, j, c) in plan {
        let (a, b) = (v[i], v[j]);
        let r = match op {
            0 => a + b,
            1 => a - b,
            2 => a.tanh() * b.tanh() * R::cst(3.0),
            3 => a / (b * b + R::cst(1.0)),
            4 => a.tanh().exp(),
            5 => (a * a + R::cst(1.0)).ln(),
            6 => (a * a + R::cst(1.0)).sqrt(),
            7 => (a * R::cst(2.0)).softplus(),
            8 => (a * a + R::cst(1.0)).powf(c),
            _ => a * R::cst(c) + R::cst(0.5),
        };
        v.push(r);
    }
    let n = v.len();
    v[n - 3] + v[n - 2] + v[n - 1]
}

/// Largest componentwise error relative to the largest entry of `b`. The
/// floor keeps graphs whose gradient vanishes identically from comparing
/// pure rounding noise.
fn rel_max_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-6);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

fn shrunken_problem() -> (Scenario, PnodeModel, Dataset) {
    let mut sc = Scenario::builtin();
    sc.grid = TimeGrid::new(0.0, 2e-5, 2).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(31);
    let base = PnodeModel::for_scenario(&sc, &[1], 3).unwrap();
    let p: Vec<f64> = base.flat_params().iter().map(|v| v + rng.gen_range(-0.2..0.2)).collect();
    let model = base.with_flat_params(&p).unwrap();
    let oracle = Oracle::new(sc.clone());
    let samples = (0..3)
        .map(|_| {
            let eta = LaserParams::from_array(std::array::from_fn(|i| rng.gen_range(RANGES[i].0..=RANGES[i].1)));
            Sample::from_trajectory(&eta, &oracle.trajectory(&eta).unwrap())
        })
        .collect();
    let data = Dataset {
        seed: 0,
        scenario: sc.id().to_string(),
        grid: sc.grid,
        dims: vec![],
        samples,
    };
    (sc, model, data)
}

fn autodiff() -> Check {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(77);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n_in = rng.gen_range(1..5);
        let n_ops = rng.gen_range(4..30);
        let plan: Vec<(u8, usize, usize, f64)> = (0..n_ops)
            .map(|k| {
                let m = n_in + k;
                (rng.gen_range(0..10), rng.gen_range(0..m), rng.gen_range(0..m), rng.gen_range(-1.5..1.5))
            })
            .collect();
        let x: Vec<f64> = (0..n_in).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let tape = Tape::new().map_err(|e| e.to_string())?;
        let xs = tape.params(&x);
        let ad = tape.backward(eval_graph(&plan, &xs)).map_err(|e| e.to_string())?.params();
        let fd: Vec<f64> = (0..n_in)
            .map(|i| {
                let h = 1e-3 * x[i].abs().max(1.0);
                let at = |k: f64| {
                    let mut xs = x.clone();
                    xs[i] += k * h;
                    eval_graph(&plan, &xs)
                };
                (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * h)
            })
            .collect();
        let e = rel_max_error(&ad, &fd);
        if e > 1e-5 && std::env::var("ACCEPTANCE_DEBUG").is_ok() {
            eprintln!("{plan:?}\n{x:?}\nad {ad:?}\nfd {fd:?}");
        }
        worst = worst.max(e);
    }
    ensure(worst < 1e-5, || format!("worst graph error {worst:e}"))?;

    let (sc, model, data) = shrunken_problem();
    let (_, g, _) = model.loss_and_grad(&sc, &data).map_err(|e| e.to_string())?;
    let x = model.flat_params();
    let fd: Vec<f64> = (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let f = |p: &[f64]| model.with_flat_params(p).unwrap().loss(&sc, &data).unwrap();
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
        .collect();
    let loss_err = rel_max_error(&g, &fd);
    ensure(loss_err < 1e-4, || format!("end-to-end loss gradient error {loss_err:e}"))?;
    Ok(format!(
        "graphs {worst:.1e}, end-to-end {loss_err:.1e} over {} parameters",
        x.len()
    ))
}

// 4 -------------------------------------------------------------------------

fn heat_normalization() -> Check {
    let sc = Scenario::builtin();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(4);
    let mut worst = 0.0f64;
    for k in 0..50 {
        let base = PnodeModel::for_scenario(&sc, &[16, 16], k).unwrap();
        let p: Vec<f64> = base.flat_params().iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect();
        let model = base.with_flat_params(&p).unwrap();
        let eta = LaserParams::from_array(std::array::from_fn(|i| rng.gen_range(RANGES[i].0..=RANGES[i].1)));
        let cl = model.closure(&p, &eta);
        worst = worst.max((sc.grid.trapz(&cl.heat) - cl.c).abs() / cl.c);
    }
    ensure(worst < 1e-10, || format!("worst relative mismatch {worst:e}"))?;
    Ok(format!("worst relative mismatch {worst:.1e}"))
}

// 5 -------------------------------------------------------------------------

fn single_trajectory() -> Check {
    let oracle = Oracle::builtin();
    let sc = oracle.scenario.clone();
    let eta = LaserParams::reference(&oracle.law());
    let truth = oracle.trajectory(&eta).map_err(|e| e.to_string())?;
    let data = Dataset {
        seed: 0,
        scenario: sc.id().to_string(),
        grid: sc.grid,
        dims: vec![],
        samples: vec![Sample::from_trajectory(&eta, &truth)],
    };
    let model = PnodeModel::for_scenario(&sc, &[50, 50], 7).unwrap();
    let opts = TrainOptions {
        max_iters: 200,
        grad_tol: 1e-8,
        ..Default::default()
    };
    let rep = train(&model, &sc, &data, &opts, |_| {}).map_err(|e| e.to_string())?;
    let l0 = rep.history[0].loss;
    let l1 = rep.history.last().unwrap().loss;
    let ratio = l0 / l1;
    let fit = rep.model.predict_in(&sc, &eta).map_err(|e| e.to_string())?;
    let mre = fit.temp[1..]
        .iter()
        .zip(&truth.temp[1..])
        .map(|(a, b)| ((a - b) / b).abs())
        .sum::<f64>()
        / (fit.len() - 1) as f64;
    // The audit quadrature needs output spacing finer than the ignition front.
    let mut fine = rep.model.clone();
    fine.grid = sc.grid.refined(40);
    let audit = relative_audit(&fine.predict_in(&sc, &eta).map_err(|e| e.to_string())?);
    ensure(truth.final_temperature() > IGNITION_THRESHOLD, || "reference case did not ignite".into())?;
    ensure(ratio >= 1e3, || format!("loss fell only by {ratio:.3e}"))?;
    ensure(mre < 0.02, || format!("mean relative T error {mre:.4}"))?;
    ensure(audit < 1e-6, || format!("mass audit {audit:e}"))?;
    Ok(format!(
        "loss ratio {ratio:.2e}, MRE {:.3}%, audit {audit:.1e}, {} iterations",
        100.0 * mre,
        rep.history.len() - 1
    ))
}

fn relative_audit(tr: &Trajectory) -> f64 {
    tr.mass_audit().abs() / tr.m.iter().cloned().fold(0.0, f64::max)
}

// 6 -------------------------------------------------------------------------

const REPLICA_ITERS: usize = 100;

fn two_parameter_replica() -> Check {
    let oracle = Oracle::builtin();
    let sc = oracle.scenario.clone();
    let dims = parse_dims("y,amplitude").unwrap();
    let data = sample_dataset(&oracle, 143, 42, &dims).map_err(|e| e.to_string())?;
    let (train_d, test_d) = data.split(100);
    let model = PnodeModel::for_scenario(&sc, &parse_arch("2x300").unwrap(), 0).unwrap();
    let opts = TrainOptions {
        max_iters: REPLICA_ITERS,
        grad_tol: 1e-8,
        ..Default::default()
    };
    let rep = train(&model, &sc, &train_d, &opts, |_| {}).map_err(|e| e.to_string())?;
    let etas: Vec<LaserParams> = test_d.samples.iter().map(|s| s.params()).collect();
    let truth: Vec<f64> = test_d.samples.iter().map(|s| s.final_temperature()).collect();
    let pred = rep.model.final_temperatures(&sc, &etas).map_err(|e| e.to_string())?;
    let m = metrics(&pred, &truth).map_err(|e| e.to_string())?;
    let acc = m.confusion.accuracy();
    let kinds = stratify(&scaled_rows(&etas), &truth, DBSCAN_EPS, DBSCAN_MIN_PTS).map_err(|e| e.to_string())?;
    let wrong: Vec<usize> = (0..truth.len())
        .filter(|&i| (pred[i] > IGNITION_THRESHOLD) != (truth[i] > IGNITION_THRESHOLD))
        .collect();
    let wrong_core = wrong.iter().filter(|&&i| kinds[i] == PointKind::Core).count();
    let mae_of = |core: bool| {
        let e: Vec<f64> = (0..truth.len())
            .filter(|&i| (kinds[i] == PointKind::Core) == core)
            .map(|i| (pred[i] - truth[i]).abs())
            .collect();
        e.iter().sum::<f64>() / e.len().max(1) as f64
    };
    let (mae_core, mae_edge) = (mae_of(true), mae_of(false));
    ensure(acc >= 0.9, || format!("accuracy {acc:.3}"))?;
    ensure(2 * wrong_core <= wrong.len(), || {
        format!("{wrong_core} of {} misclassified points are cluster cores", wrong.len())
    })?;
    ensure(mae_edge > mae_core, || {
        format!("MAE at cluster cores {mae_core:.1} K is not below the edge MAE {mae_edge:.1} K")
    })?;
    Ok(format!(
        "accuracy {acc:.3}, {} misclassified ({wrong_core} core), MAE core {mae_core:.1} K vs edge {mae_edge:.1} K",
        wrong.len()
    ))
}

// 7 -------------------------------------------------------------------------

const ORDERING_ITERS: usize = 1000;

fn six_parameter_ordering() -> Check {
    let oracle = Oracle::builtin();
    let sc = oracle.scenario.clone();
    let dims = parse_dims("x,y,amplitude,radius,duration,maf").unwrap();
    let data = sample_dataset(&oracle, 200, 42, &dims).map_err(|e| e.to_string())?;
    let (train_d, test_d) = data.split(100);
    let hidden = parse_arch("2x300").unwrap();
    let x_train = scaled_rows(&train_d.samples.iter().map(|s| s.params()).collect::<Vec<_>>());
    let y_train: Vec<f64> = train_d.samples.iter().map(|s| s.final_temperature()).collect();
    let etas: Vec<LaserParams> = test_d.samples.iter().map(|s| s.params()).collect();
    let x_test = scaled_rows(&etas);
    let truth: Vec<f64> = test_d.samples.iter().map(|s| s.final_temperature()).collect();
    let sweep = sweep_grid((1, 2), &LaserParams::reference(&oracle.law()), 30).unwrap();
    let x_sweep = scaled_rows(&sweep);
    let mid = |t: &[f64]| band_fraction(t, 500.0, 900.0);

    let krr = krr_fit(&x_train, &y_train, KRR_RIDGE, KRR_GAMMA).map_err(|e| e.to_string())?;
    let nn = nn_regress_fit(&x_train, &y_train, &hidden, 0, 500).map_err(|e| e.to_string())?;
    let model = PnodeModel::for_scenario(&sc, &hidden, 0).unwrap();
    let opts = TrainOptions {
        max_iters: ORDERING_ITERS,
        grad_tol: 1e-8,
        ..Default::default()
    };
    let rep = train(&model, &sc, &train_d, &opts, |_| {}).map_err(|e| e.to_string())?;

    let mae = |p: &[f64]| metrics(p, &truth).map(|m| m.mae).map_err(|e| e.to_string());
    let mae_p = mae(&rep.model.final_temperatures(&sc, &etas).map_err(|e| e.to_string())?)?;
    let mae_k = mae(&krr.predict_rows(&x_test))?;
    let mae_n = mae(&nn.predict_rows(&x_test))?;
    let mid_p = mid(&rep.model.final_temperatures(&sc, &sweep).map_err(|e| e.to_string())?);
    let mid_k = mid(&krr.predict_rows(&x_sweep));
    let mid_n = mid(&nn.predict_rows(&x_sweep));
    let detail = format!(
        "MAE pnode {mae_p:.1} / krr {mae_k:.1} / nn {mae_n:.1} K; mid-band pnode {mid_p:.3} / krr {mid_k:.3} / nn {mid_n:.3}"
    );
    ensure(mae_p < mae_k && mae_k < mae_n, || format!("ordering violated: {detail}"))?;
    ensure(mid_p < 0.10, || format!("pnode sweep not sharp: {detail}"))?;
    ensure(mid_k > mid_p && mid_n > mid_p, || format!("baselines sharper than pnode: {detail}"))?;
    Ok(detail)
}

// 8 -------------------------------------------------------------------------

/// Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Quadratic-time DBSCAN: kinds plus clusters as sets of member indices.
fn brute_dbscan(p: &[Vec<f64>], eps: f64, min_pts: usize) -> (Vec<PointKind>, Vec<Option<usize>>) {
    let n = p.len();
    let near = |i: usize, j: usize| sq_dist(&p[i], &p[j]).sqrt() <= eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    // Components of the core graph, labelled by their lowest index.
    let mut comp: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        if !core[i] || comp[i].is_some() {
            continue;
        }
        let mut stack = vec![i];
        comp[i] = Some(i);
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if core[v] && comp[v].is_none() && near(u, v) {
                    comp[v] = Some(i);
                    stack.push(v);
                }
            }
        }
    }
    let mut kind = vec![PointKind::Noise; n];
    let mut label = comp.clone();
    for i in 0..n {
        if core[i] {
            kind[i] = PointKind::Core;
            continue;
        }
        let best = (0..n)
            .filter(|&j| core[j] && near(i, j))
            .min_by(|&a, &b| sq_dist(&p[i], &p[a]).total_cmp(&sq_dist(&p[i], &p[b])).then(comp[a].cmp(&comp[b])));
        if let Some(j) = best {
            kind[i] = PointKind::Boundary;
            label[i] = comp[j];
        }
    }
    (kind, label)
}

/// Renames cluster labels by order of first appearance.
fn canonical<T: Copy + Ord>(labels: &[Option<T>]) -> Vec<Option<usize>> {
    let mut seen = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            l.map(|v| {
                let next = seen.len();
                *seen.entry(v).or_insert(next)
            })
        })
        .collect()
}

fn baseline_oracles() -> Check {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(8);
    let x: Vec<Vec<f64>> = (0..20).map(|_| (0..6).map(|_| rng.gen::<f64>()).collect()).collect();
    let y: Vec<f64> = (0..20).map(|_| rng.gen_range(350.0..2500.0)).collect();
    let krr = krr_fit(&x, &y, KRR_RIDGE, KRR_GAMMA).map_err(|e| e.to_string())?;
    let k: Vec<Vec<f64>> = (0..20)
        .map(|i| {
            (0..20)
                .map(|j| (-KRR_GAMMA * sq_dist(&x[i], &x[j])).exp() + if i == j { KRR_RIDGE } else { 0.0 })
                .collect()
        })
        .collect();
    let w = dense_solve(k, y.clone());
    let mut krr_err = 0.0f64;
    for _ in 0..50 {
        let q: Vec<f64> = (0..6).map(|_| rng.gen::<f64>()).collect();
        let direct: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * (-KRR_GAMMA * sq_dist(xi, &q)).exp()).sum();
        krr_err = krr_err.max((krr.predict(&q) - direct).abs() / direct.abs().max(1.0));
    }
    ensure(krr_err < 1e-8, || format!("KRR differs from the direct solve by {krr_err:e}"))?;

    // Four blobs with uniform stragglers.
    let centers = [[0.2, 0.2], [0.75, 0.3], [0.5, 0.8], [0.15, 0.7]];
    let pts: Vec<Vec<f64>> = (0..300)
        .map(|i| {
            if i % 5 == 4 {
                vec![rng.gen(), rng.gen()]
            } else {
                let c = centers[i % 4];
                vec![c[0] + rng.gen_range(-0.08..0.08), c[1] + rng.gen_range(-0.08..0.08)]
            }
        })
        .collect();
    let got = dbscan(&pts, 0.05, DBSCAN_MIN_PTS).map_err(|e| e.to_string())?;
    let (kind, label) = brute_dbscan(&pts, 0.05, DBSCAN_MIN_PTS);
    ensure(got.kind == kind, || "point kinds differ from brute force".into())?;
    ensure(canonical(&got.cluster) == canonical(&label), || "cluster labels differ from brute force".into())?;
    let n_clusters = canonical(&label).iter().flatten().max().map_or(0, |m| m + 1);
    Ok(format!(
        "KRR {krr_err:.1e}; DBSCAN exact on 300 points, {n_clusters} clusters"
    ))
}

// 9 -------------------------------------------------------------------------

fn pnode(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pnode"))
        .current_dir(dir)
        .args(args)
        .env_remove("PNODE_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("pnode {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim())
    })
}

fn cli_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let runs: [&[&str]; 7] = [
        &["gen", "--n", "16", "--seed", "3", "--dims", "y,amplitude", "--out", "data.json"],
        &["train", "--data", "data.json", "--arch", "2x6", "--max-iters", "4", "--train-n", "12", "--out", "model.json"],
        &[
            "eval", "--model", "model.json", "--data", "data.json", "--baselines", "krr,nn", "--train-n", "12",
            "--arch", "2x6", "--nn-iters", "20", "--out", "eval.json",
        ],
        &[
            "sweep", "--model", "model.json", "--baselines", "krr", "--data", "data.json", "--train-n", "12",
            "--resolution", "4", "--out", "sweep.csv",
        ],
        &["plot", "--in", "sweep.csv", "--out", "sweep.svg"],
        &["plot", "--in", "data.json", "--out", "data.svg"],
        &["plot", "--in", "model.log.csv", "--out", "log.svg"],
    ];
    let mut checked = 0;
    for args in runs {
        pnode(dir, args)?;
        let out = args[args.len() - 1];
        let manifest = format!("{out}.manifest.json");
        let text = std::fs::read_to_string(dir.join(&manifest)).map_err(|e| format!("{manifest}: {e}"))?;
        let recorded: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        let outputs = recorded["outputs"].as_object().ok_or("manifest lists no outputs")?.clone();
        let before: Vec<Vec<u8>> = outputs.keys().map(|p| std::fs::read(p).unwrap_or_default()).collect();

        let again = dir.join(format!("again-{checked}"));
        pnode(dir, &["rerun", "--manifest", &manifest, "--out-dir", again.to_str().unwrap()])?;
        for (path, bytes) in outputs.keys().zip(&before) {
            let name = Path::new(path).file_name().unwrap();
            let twin = std::fs::read(again.join(name)).map_err(|e| format!("{}: {e}", name.to_string_lossy()))?;
            ensure(&twin == bytes, || format!("{} differs on rerun", name.to_string_lossy()))?;
        }
        // In place, the rerun itself verifies the recorded hashes.
        pnode(dir, &["rerun", "--manifest", &manifest])?;
        checked += 1;
    }
    Ok(format!("{checked} commands rerun hash-identical"))
}
