//! Command bodies. Each returns the bytes it wants written; `main` is the
//! only writer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pnode_core::baselines::{self, Metrics, PointKind};
use pnode_core::datagen::{self, Dataset, LaserParams, Oracle, PARAM_NAMES, RANGES};
use pnode_core::neural::parse_arch;
use pnode_core::optim::LbfgsOptions;
use pnode_core::pnode::{train, PnodeModel, TrainOptions};
use pnode_core::reactor::Trajectory;
use pnode_core::scenario::Scenario;
use serde::Serialize;

use crate::config::{EvalArgs, GenArgs, PlotArgs, SweepArgs, TrainArgs};
use crate::svg;
use crate::CliError;

pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<(PathBuf, Vec<u8>)>,
    pub scenario: String,
}

fn usage(e: pnode_core::Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn scenario(path: &Option<PathBuf>) -> Result<Scenario, CliError> {
    match path {
        Some(p) => Ok(Scenario::load(p)?),
        None => Ok(Scenario::builtin()),
    }
}

fn dataset(path: &Path) -> Result<Dataset, CliError> {
    Dataset::from_json(&read(path)?).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn model(path: &Path) -> Result<PnodeModel, CliError> {
    PnodeModel::from_json(&read(path)?).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn inputs(paths: &[Option<&PathBuf>]) -> Vec<PathBuf> {
    paths.iter().flatten().map(|p| (*p).clone()).collect()
}

pub fn gen(a: &GenArgs) -> Result<Outcome, CliError> {
    let dims = datagen::parse_dims(&a.dims).map_err(usage)?;
    if a.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let sc = scenario(&a.scenario)?;
    let id = sc.id().to_string();
    let data = datagen::sample_dataset(&Oracle::new(sc), a.n, a.seed, &dims)?;
    Ok(Outcome {
        inputs: inputs(&[a.scenario.as_ref()]),
        outputs: vec![(a.out.clone(), data.to_json().into_bytes())],
        scenario: id,
    })
}

pub fn train_cmd(a: &TrainArgs) -> Result<Outcome, CliError> {
    let hidden = parse_arch(&a.arch).map_err(usage)?;
    if a.substeps == 0 {
        return Err(CliError::Usage("--substeps must be at least 1".into()));
    }
    if !(a.max_step > 0.0) {
        return Err(CliError::Usage("--max-step must be positive".into()));
    }
    let sc = scenario(&a.scenario)?;
    let mut data = dataset(&a.data)?;
    if let Some(n) = a.train_n {
        data = data.split(n).0;
    }
    let mut m = PnodeModel::for_scenario(&sc, &hidden, a.seed)?;
    m.substeps = a.substeps;
    let opts = TrainOptions {
        max_iters: a.max_iters,
        grad_tol: a.grad_tol,
        seed: a.seed,
        kinetics_warmup: a.kinetics_warmup,
        lbfgs: LbfgsOptions {
            max_step: a.max_step,
            ..TrainOptions::default().lbfgs
        },
        ..TrainOptions::default()
    };
    let report = train(&m, &sc, &data, &opts, |r| {
        eprintln!(
            "iter {:>4}  loss {:.6e}  |g|inf {:.3e}  step {:.3e}{}",
            r.iter,
            r.loss,
            r.grad_inf_norm,
            r.step_length,
            if r.clipped > 0 { format!("  clipped {}", r.clipped) } else { String::new() }
        )
    })?;
    eprintln!("stopped: {:?} after {} evaluations", report.status, report.evals);
    Ok(Outcome {
        inputs: inputs(&[Some(&a.data), a.scenario.as_ref()]),
        outputs: vec![
            (a.out.clone(), report.model.to_json().into_bytes()),
            (with_suffix(&a.out, "log.csv"), report.log_csv().into_bytes()),
        ],
        scenario: sc.id().to_string(),
    })
}

#[derive(Serialize)]
struct PointRecord {
    eta: [f64; 6],
    truth: f64,
    predictions: BTreeMap<String, f64>,
    dbscan: PointKind,
}

#[derive(Serialize)]
struct ModelReport {
    #[serde(flatten)]
    metrics: Metrics,
    /// MAE over the points of each DBSCAN kind.
    mae_by_kind: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct EvalReport {
    train_samples: usize,
    test_samples: usize,
    dbscan_eps: f64,
    dbscan_min_pts: usize,
    models: BTreeMap<String, ModelReport>,
    points: Vec<PointRecord>,
}

fn parse_models(s: &str, allowed: &[&str]) -> Result<Vec<String>, CliError> {
    let mut out: Vec<String> = Vec::new();
    for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
        let name = name.to_ascii_lowercase();
        if !allowed.contains(&name.as_str()) {
            return Err(CliError::Usage(format!("unknown model {name:?}; expected one of {allowed:?}")));
        }
        if !out.contains(&name) {
            out.push(name);
        }
    }
    Ok(out)
}

/// Final-temperature predictors over a list of η.
struct Predictors {
    names: Vec<String>,
    pnode: Option<(PnodeModel, Scenario)>,
    krr: Option<baselines::KrrModel>,
    nn: Option<baselines::NnRegressor>,
    oracle: Option<Oracle>,
}

impl Predictors {
    fn build(
        pnode: Option<&PathBuf>,
        wanted: &[String],
        train_data: Option<&Dataset>,
        arch: &str,
        nn_iters: usize,
        seed: u64,
        sc: &Scenario,
    ) -> Result<Predictors, CliError> {
        let mut p = Predictors {
            names: Vec::new(),
            pnode: None,
            krr: None,
            nn: None,
            oracle: None,
        };
        let mut hidden = parse_arch(arch).map_err(usage)?;
        if let Some(path) = pnode {
            let m = model(path)?;
            let sizes = &m.shape_net.spec.layer_sizes;
            hidden = sizes[1..sizes.len() - 1].to_vec();
            p.pnode = Some((m, sc.clone()));
            p.names.push("pnode".into());
        }
        let needs_data = wanted.iter().any(|w| w == "krr" || w == "nn");
        let fit = match (needs_data, train_data) {
            (true, None) => return Err(CliError::Usage("krr and nn need --data".into())),
            (true, Some(d)) => {
                if d.is_empty() {
                    return Err(CliError::Usage("training split is empty".into()));
                }
                let etas: Vec<LaserParams> = d.samples.iter().map(|s| s.params()).collect();
                let y: Vec<f64> = d.samples.iter().map(|s| s.final_temperature()).collect();
                Some((baselines::scaled_rows(&etas), y))
            }
            _ => None,
        };
        for w in wanted {
            match w.as_str() {
                "krr" => {
                    let (x, y) = fit.as_ref().unwrap();
                    p.krr = Some(baselines::krr_fit(x, y, baselines::KRR_RIDGE, baselines::KRR_GAMMA)?);
                }
                "nn" => {
                    let (x, y) = fit.as_ref().unwrap();
                    let nn = baselines::nn_regress_fit(x, y, &hidden, seed, nn_iters)?;
                    eprintln!("nn: {:?} after {} iterations", nn.status, nn.iterations);
                    p.nn = Some(nn);
                }
                "oracle" => p.oracle = Some(Oracle::new(sc.clone())),
                _ => unreachable!(),
            }
            p.names.push(w.clone());
        }
        Ok(p)
    }

    fn predict(&self, etas: &[LaserParams]) -> Result<BTreeMap<String, Vec<f64>>, CliError> {
        let rows = baselines::scaled_rows(etas);
        let mut out = BTreeMap::new();
        if let Some((m, sc)) = &self.pnode {
            out.insert("pnode".to_string(), m.final_temperatures(sc, etas)?);
        }
        if let Some(k) = &self.krr {
            out.insert("krr".to_string(), k.predict_rows(&rows));
        }
        if let Some(n) = &self.nn {
            out.insert("nn".to_string(), n.predict_rows(&rows));
        }
        if let Some(o) = &self.oracle {
            let tr = datagen::trajectories(o, etas)?;
            out.insert("oracle".to_string(), tr.iter().map(Trajectory::final_temperature).collect());
        }
        Ok(out)
    }
}

pub fn eval(a: &EvalArgs) -> Result<Outcome, CliError> {
    let wanted = parse_models(&a.baselines, &["krr", "nn", "oracle"])?;
    if a.model.is_none() && wanted.is_empty() {
        return Err(CliError::Usage("nothing to evaluate: give --model or --baselines".into()));
    }
    if !(a.dbscan_eps > 0.0) || a.dbscan_min_pts == 0 {
        return Err(CliError::Usage("--dbscan-eps must be positive and --dbscan-min-pts at least 1".into()));
    }
    let sc = scenario(&a.scenario)?;
    let data = dataset(&a.data)?;
    let (train_d, test_d) = data.split(a.train_n);
    if test_d.is_empty() {
        return Err(CliError::Usage(format!(
            "--train-n {} leaves no test samples out of {}",
            a.train_n,
            data.len()
        )));
    }
    let preds = Predictors::build(a.model.as_ref(), &wanted, Some(&train_d), &a.arch, a.nn_iters, a.seed, &sc)?;
    let etas: Vec<LaserParams> = test_d.samples.iter().map(|s| s.params()).collect();
    let truth: Vec<f64> = test_d.samples.iter().map(|s| s.final_temperature()).collect();
    let predicted = preds.predict(&etas)?;
    let kinds = baselines::stratify(&baselines::scaled_rows(&etas), &truth, a.dbscan_eps, a.dbscan_min_pts)?;

    let mut models = BTreeMap::new();
    let mut table = String::from("model,MAE,MRE,accuracy,MAE_core,MAE_boundary,MAE_noise\n");
    for name in &preds.names {
        let p = &predicted[name];
        let metrics = baselines::metrics(p, &truth)?;
        let mut by_kind = BTreeMap::new();
        for kind in [PointKind::Core, PointKind::Boundary, PointKind::Noise] {
            let errs: Vec<f64> = (0..p.len())
                .filter(|&i| kinds[i] == kind)
                .map(|i| (p[i] - truth[i]).abs())
                .collect();
            let mae = if errs.is_empty() {
                f64::NAN
            } else {
                errs.iter().sum::<f64>() / errs.len() as f64
            };
            by_kind.insert(format!("{kind:?}").to_lowercase(), mae);
        }
        table.push_str(&format!(
            "{name},{},{},{},{},{},{}\n",
            metrics.mae,
            metrics.mre,
            metrics.confusion.accuracy(),
            by_kind["core"],
            by_kind["boundary"],
            by_kind["noise"]
        ));
        // JSON has no NaN; empty strata are left out.
        by_kind.retain(|_, v| v.is_finite());
        models.insert(name.clone(), ModelReport { metrics, mae_by_kind: by_kind });
    }
    let points = (0..etas.len())
        .map(|i| PointRecord {
            eta: etas[i].to_array(),
            truth: truth[i],
            predictions: predicted.iter().map(|(k, v)| (k.clone(), v[i])).collect(),
            dbscan: kinds[i],
        })
        .collect();
    let report = EvalReport {
        train_samples: train_d.len(),
        test_samples: test_d.len(),
        dbscan_eps: a.dbscan_eps,
        dbscan_min_pts: a.dbscan_min_pts,
        models,
        points,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    Ok(Outcome {
        inputs: inputs(&[a.model.as_ref(), Some(&a.data), a.scenario.as_ref()]),
        outputs: vec![
            (a.out.clone(), json.into_bytes()),
            (with_suffix(&a.out, "mae.csv"), table.into_bytes()),
        ],
        scenario: sc.id().to_string(),
    })
}

pub fn sweep(a: &SweepArgs) -> Result<Outcome, CliError> {
    let dims = datagen::parse_dims(&a.dims).map_err(usage)?;
    if dims.len() != 2 {
        return Err(CliError::Usage("--dims needs exactly two parameters".into()));
    }
    let wanted = parse_models(&a.baselines, &["krr", "nn", "oracle"])?;
    if a.model.is_none() && wanted.is_empty() {
        return Err(CliError::Usage("nothing to sweep: give --model or --baselines".into()));
    }
    let sc = scenario(&a.scenario)?;
    let train_d = match &a.data {
        Some(p) => Some(dataset(p)?.split(a.train_n).0),
        None => None,
    };
    let preds = Predictors::build(a.model.as_ref(), &wanted, train_d.as_ref(), &a.arch, a.nn_iters, a.seed, &sc)?;
    let fixed = LaserParams::reference(&sc.law());
    let grid = datagen::sweep_grid((dims[0], dims[1]), &fixed, a.resolution).map_err(usage)?;
    let predicted = preds.predict(&grid)?;

    let (d0, d1) = (PARAM_NAMES[dims[0]], PARAM_NAMES[dims[1]]);
    let mut csv = format!("i,j,{d0},{d1}");
    for name in &preds.names {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');
    let r = a.resolution;
    for (k, eta) in grid.iter().enumerate() {
        let v = eta.to_array();
        csv.push_str(&format!("{},{},{},{}", k / r, k % r, v[dims[0]], v[dims[1]]));
        for name in &preds.names {
            csv.push_str(&format!(",{}", predicted[name][k]));
        }
        csv.push('\n');
    }
    for name in &preds.names {
        eprintln!(
            "{name}: {:.1}% of cells in (500 K, 900 K)",
            100.0 * datagen::band_fraction(&predicted[name], 500.0, 900.0)
        );
    }
    Ok(Outcome {
        inputs: inputs(&[a.model.as_ref(), a.data.as_ref(), a.scenario.as_ref()]),
        outputs: vec![(a.out.clone(), csv.into_bytes())],
        scenario: sc.id().to_string(),
    })
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn parse_csv(text: &str, origin: &Path) -> Result<Table, CliError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| CliError::Runtime(format!("{}: empty file", origin.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let row: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| CliError::Runtime(format!("{}, line {}: {e}", origin.display(), n + 2)))?;
        if row.len() != header.len() {
            return Err(CliError::Runtime(format!(
                "{}, line {}: expected {} fields",
                origin.display(),
                n + 2,
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

const IGNITED: &str = "#c0392b";
const QUENCHED: &str = "#2c7fb8";

pub fn plot(a: &PlotArgs) -> Result<Outcome, CliError> {
    let text = read(&a.input)?;
    let svg = if a.input.extension().is_some_and(|e| e == "json") {
        let data = dataset(&a.input)?;
        let mut times = data.times();
        times.insert(0, data.grid.t0);
        let t0 = Scenario::builtin().record.initial.t;
        let series: Vec<svg::Series> = data
            .samples
            .iter()
            .map(|s| {
                let mut y = vec![t0];
                y.extend_from_slice(&s.temp);
                svg::Series {
                    x: times.iter().map(|t| t * 1e6).collect(),
                    y,
                    color: if s.final_temperature() > datagen::IGNITION_THRESHOLD { IGNITED } else { QUENCHED },
                }
            })
            .collect();
        svg::line_chart(&series, "Temperature", "t (µs)", "T (K)", false)
    } else {
        let t = parse_csv(&text, &a.input)?;
        let col = |name: &str| t.header.iter().position(|h| h == name);
        if t.header.len() >= 5 && t.header[0] == "i" && t.header[1] == "j" {
            let r = t.rows.iter().map(|row| row[1] as usize).max().unwrap_or(0) + 1;
            let nx = t.rows.len() / r.max(1);
            let names: Vec<&str> = t.header[4..].iter().map(String::as_str).collect();
            let cols: Vec<Vec<f64>> = (4..t.header.len()).map(|c| t.rows.iter().map(|row| row[c]).collect()).collect();
            let maps: Vec<svg::Heatmap> = names
                .iter()
                .zip(&cols)
                .map(|(n, v)| svg::Heatmap {
                    title: n,
                    values: v,
                    nx,
                    ny: r,
                })
                .collect();
            let range_of = |name: &str| {
                PARAM_NAMES
                    .iter()
                    .position(|p| *p == name)
                    .map_or((0.0, 1.0), |i| RANGES[i])
            };
            svg::heatmaps(&maps, &t.header[2], &t.header[3], range_of(&t.header[2]), range_of(&t.header[3]), (300.0, 1700.0))
        } else if let (Some(i), Some(l)) = (col("iter"), col("loss")) {
            let s = svg::Series {
                x: t.rows.iter().map(|r| r[i]).collect(),
                y: t.rows.iter().map(|r| r[l]).collect(),
                color: QUENCHED,
            };
            svg::line_chart(&[s], "Training loss", "iteration", "loss", true)
        } else if let (Some(ti), Some(tt)) = (col("t"), col("T")) {
            let s = svg::Series {
                x: t.rows.iter().map(|r| r[ti] * 1e6).collect(),
                y: t.rows.iter().map(|r| r[tt]).collect(),
                color: IGNITED,
            };
            svg::line_chart(&[s], "Temperature", "t (µs)", "T (K)", false)
        } else {
            return Err(CliError::Usage(format!(
                "{}: not a sweep, training log or trajectory CSV",
                a.input.display()
            )));
        }
    };
    Ok(Outcome {
        inputs: vec![a.input.clone()],
        outputs: vec![(a.out.clone(), svg.into_bytes())],
        scenario: String::new(),
    })
}
