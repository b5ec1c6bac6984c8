//! Command options. Each struct doubles as the recorded configuration in a
//! run manifest, so a manifest can be replayed without the original flags.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GenArgs {
    /// Number of samples.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated parameters to sample; the rest stay at the reference values.
    #[arg(long, default_value = "x,y,amplitude,radius,duration,maf")]
    pub dims: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Scenario JSON; defaults to the built-in scenario.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Hidden layers of both networks, e.g. `2x300` or `64,32`.
    #[arg(long, default_value = "2x300")]
    pub arch: String,
    /// Checkpoint path; the loss log goes next to it as `<stem>.log.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train on the first N samples only.
    #[arg(long)]
    pub train_n: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    pub grad_tol: f64,
    /// RK4 steps per observation interval.
    #[arg(long, default_value_t = 1)]
    pub substeps: usize,
    /// Iterations with the Arrhenius heads held fixed before full training.
    #[arg(long, default_value_t = 30)]
    pub kinetics_warmup: usize,
    /// Longest step the line search may try, in parameter space.
    #[arg(long, default_value_t = 1.0)]
    pub max_step: f64,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// PNODE checkpoint; omit to evaluate baselines only.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated subset of `krr`, `nn`, `oracle`; empty for none.
    #[arg(long, default_value = "krr,nn")]
    pub baselines: String,
    /// The first N samples fit the baselines; the rest are the test set.
    #[arg(long, default_value_t = 100)]
    pub train_n: usize,
    #[arg(long, default_value_t = 0.15)]
    pub dbscan_eps: f64,
    #[arg(long, default_value_t = 5)]
    pub dbscan_min_pts: usize,
    /// Hidden layers of the direct network when no checkpoint fixes them.
    #[arg(long, default_value = "2x300")]
    pub arch: String,
    #[arg(long, default_value_t = 500)]
    pub nn_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report JSON; the MAE table goes next to it as `<stem>.mae.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// The two swept parameters.
    #[arg(long, default_value = "y,amplitude")]
    pub dims: String,
    #[arg(long, default_value_t = 30)]
    pub resolution: usize,
    /// Comma-separated subset of `krr`, `nn`, `oracle`.
    #[arg(long, default_value = "")]
    pub baselines: String,
    /// Training data for `krr` and `nn`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub train_n: usize,
    #[arg(long, default_value = "2x300")]
    pub arch: String,
    #[arg(long, default_value_t = 500)]
    pub nn_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PlotArgs {
    /// A sweep CSV, a training log CSV, a trajectory CSV or a dataset JSON.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Config {
    Gen(GenArgs),
    Train(TrainArgs),
    Eval(EvalArgs),
    Sweep(SweepArgs),
    Plot(PlotArgs),
}

impl Config {
    pub fn seed(&self) -> u64 {
        match self {
            Config::Gen(a) => a.seed,
            Config::Train(a) => a.seed,
            Config::Eval(a) => a.seed,
            Config::Sweep(a) => a.seed,
            Config::Plot(_) => 0,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Config::Gen(a) => a.seed = seed,
            Config::Train(a) => a.seed = seed,
            Config::Eval(a) => a.seed = seed,
            Config::Sweep(a) => a.seed = seed,
            Config::Plot(_) => {}
        }
    }

    pub fn out(&self) -> &PathBuf {
        match self {
            Config::Gen(a) => &a.out,
            Config::Train(a) => &a.out,
            Config::Eval(a) => &a.out,
            Config::Sweep(a) => &a.out,
            Config::Plot(a) => &a.out,
        }
    }

    /// Moves every output into `dir`, keeping file names.
    pub fn redirect(&mut self, dir: &std::path::Path) {
        let move_to = |p: &mut PathBuf| {
            if let Some(name) = p.file_name() {
                *p = dir.join(name);
            }
        };
        match self {
            Config::Gen(a) => move_to(&mut a.out),
            Config::Train(a) => move_to(&mut a.out),
            Config::Eval(a) => move_to(&mut a.out),
            Config::Sweep(a) => move_to(&mut a.out),
            Config::Plot(a) => move_to(&mut a.out),
        }
    }
}
