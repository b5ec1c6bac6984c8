//! `pnode`: generate oracle data, train the PNODE, evaluate it against the
//! baselines, sweep ignition maps and draw them.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 bad flags or inputs.

mod commands;
mod config;
mod manifest;
mod svg;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Config, EvalArgs, GenArgs, PlotArgs, SweepArgs, TrainArgs};
use manifest::{Manifest, Versions};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> CliError {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<pnode_core::Error> for CliError {
    fn from(e: pnode_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "pnode", version, about = "Parameterized neural ODE experiments for laser-ignited combustion")]
struct Cli {
    /// Worker threads for per-sample work; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample laser parameters and run the oracle on each.
    Gen(GenArgs),
    /// Fit a PNODE to a dataset.
    Train(TrainArgs),
    /// Score the PNODE and baselines on the held-out samples.
    Eval(EvalArgs),
    /// Final temperature over a grid of two parameters.
    Sweep(SweepArgs),
    /// Draw a sweep, training log, trajectory or dataset as SVG.
    Plot(PlotArgs),
    /// Run a command from a config file (a bare config or a manifest).
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Repeat the run recorded in a manifest and check the outputs match.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        /// Write the repeated outputs here instead of over the originals.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn absolute(p: &mut PathBuf) {
    if let Ok(a) = std::path::absolute(&*p) {
        *p = a;
    }
}

fn absolutize(c: &mut Config) {
    match c {
        Config::Gen(a) => {
            absolute(&mut a.out);
            a.scenario.iter_mut().for_each(absolute);
        }
        Config::Train(a) => {
            absolute(&mut a.data);
            absolute(&mut a.out);
            a.scenario.iter_mut().for_each(absolute);
        }
        Config::Eval(a) => {
            a.model.iter_mut().for_each(absolute);
            absolute(&mut a.data);
            absolute(&mut a.out);
            a.scenario.iter_mut().for_each(absolute);
        }
        Config::Sweep(a) => {
            a.model.iter_mut().for_each(absolute);
            a.data.iter_mut().for_each(absolute);
            absolute(&mut a.out);
            a.scenario.iter_mut().for_each(absolute);
        }
        Config::Plot(a) => {
            absolute(&mut a.input);
            absolute(&mut a.out);
        }
    }
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var("PNODE_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("PNODE_SEED={s:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Runs `config`, writes its outputs and its manifest, and returns the manifest.
fn execute(config: &Config) -> Result<Manifest, CliError> {
    let outcome = match config {
        Config::Gen(a) => commands::gen(a)?,
        Config::Train(a) => commands::train_cmd(a)?,
        Config::Eval(a) => commands::eval(a)?,
        Config::Sweep(a) => commands::sweep(a)?,
        Config::Plot(a) => commands::plot(a)?,
    };
    let mut inputs = BTreeMap::new();
    for p in &outcome.inputs {
        inputs.insert(p.display().to_string(), manifest::hash_file(p)?);
    }
    let mut outputs = BTreeMap::new();
    for (p, bytes) in &outcome.outputs {
        if outcome.inputs.contains(p) {
            return Err(CliError::Usage(format!("{} is both an input and an output", p.display())));
        }
        outputs.insert(p.display().to_string(), manifest::sha256_hex(bytes));
    }
    for (p, bytes) in &outcome.outputs {
        write(p, bytes)?;
        eprintln!("wrote {}", p.display());
    }
    let m = Manifest {
        seed: config.seed(),
        versions: Versions {
            pnode: env!("CARGO_PKG_VERSION").to_string(),
            format: manifest::FORMAT_VERSION,
            scenario: outcome.scenario,
        },
        config_hash: manifest::config_hash(config),
        config: config.clone(),
        inputs,
        outputs,
    };
    let path = manifest::manifest_path(config.out());
    write(&path, serde_json::to_string_pretty(&m).expect("manifest serializes").as_bytes())?;
    Ok(m)
}

fn load_config(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let inner = value.get("config").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn rerun(path: &Path, out_dir: Option<&Path>) -> Result<(), CliError> {
    let recorded = manifest::load(path)?;
    for (p, h) in &recorded.inputs {
        let now = manifest::hash_file(Path::new(p))?;
        if &now != h {
            return Err(CliError::Runtime(format!("input {p} changed since the recorded run")));
        }
    }
    let mut config = recorded.config.clone();
    let renamed: BTreeMap<String, String> = match out_dir {
        Some(dir) => {
            let mut c = config.clone();
            c.redirect(dir);
            let map = recorded
                .outputs
                .keys()
                .map(|k| {
                    let name = Path::new(k).file_name().unwrap_or_default();
                    (dir.join(name).display().to_string(), k.clone())
                })
                .collect();
            config = c;
            map
        }
        None => recorded.outputs.keys().map(|k| (k.clone(), k.clone())).collect(),
    };
    let fresh = execute(&config)?;
    let mut mismatched = Vec::new();
    for (p, h) in &fresh.outputs {
        let original = renamed.get(p).and_then(|k| recorded.outputs.get(k));
        if original != Some(h) {
            mismatched.push(p.clone());
        }
    }
    if fresh.outputs.len() != recorded.outputs.len() {
        mismatched.push("(output set differs)".into());
    }
    if mismatched.is_empty() {
        eprintln!("all {} outputs identical to the recorded run", fresh.outputs.len());
        Ok(())
    } else {
        Err(CliError::Runtime(format!("outputs differ from the recorded run: {}", mismatched.join(", "))))
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    let mut config = match command {
        Command::Gen(a) => Config::Gen(a),
        Command::Train(a) => Config::Train(a),
        Command::Eval(a) => Config::Eval(a),
        Command::Sweep(a) => Config::Sweep(a),
        Command::Plot(a) => Config::Plot(a),
        Command::Run { config } => {
            let mut c = load_config(&config)?;
            absolutize(&mut c);
            execute(&c)?;
            return Ok(());
        }
        Command::Rerun { manifest, out_dir } => {
            let out_dir = out_dir.map(|mut d| {
                absolute(&mut d);
                d
            });
            return rerun(&manifest, out_dir.as_deref());
        }
    };
    if let Some(seed) = env_seed()? {
        config.set_seed(seed);
    }
    absolutize(&mut config);
    execute(&config)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    let result = match cli.jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(j) => match rayon::ThreadPoolBuilder::new().num_threads(j).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(CliError::Runtime(format!("thread pool: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
