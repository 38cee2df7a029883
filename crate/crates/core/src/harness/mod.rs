//! Command implementations behind the `hetsync` binary.
//!
//! Output files written by `simulate` into the output directory:
//!
//! - `metrics_<label>_seed<seed>.csv`, header
//!   `strategy,seed,tick,loss,accuracy,iters,idle_frac`, one row per
//!   evaluation. `iters` is the cumulative iteration count over all workers
//!   and `idle_frac` the idle ticks so far over `N × tick` (0 at tick 0).
//! - `events_<label>_seed<seed>.log`, one event per line:
//!   `tick,worker_id,kind[,payload]`. Cluster-wide events use `-` as the
//!   worker id. Payloads: `apply,<staleness>` and `eval,<loss>,<accuracy>`.
//! - `summary.json`, per-strategy means over seeds plus per-seed values.
//!
//! `<label>` is the strategy name with its parameter, e.g. `local_h2` or
//! `load_balanced_m4`. All files are UTF-8 with LF line endings.

pub mod config;
mod output;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::barrier::{solve_barrier, BarrierSolution, SolverError};
use crate::sim::{idle_fraction, simulate, SimError, SimReport};
use crate::strategy::{plan_round, StrategySpec};
use config::{load_cluster, ExperimentConfig};
pub use output::{metrics_csv, sweep_csv, RunSummary, StrategySummary, Summary, SweepRow};

/// Environment variable that replaces `repeat_seeds` with a single seed.
pub const SEED_ENV: &str = "HETSYNC_SEED";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Parse(String),

    #[error("{0}")]
    Infeasible(String),

    #[error("output error: {0}")]
    Output(String),

    #[error("{0}")]
    Other(String),
}

impl HarnessError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse(_) => 2,
            Self::Infeasible(_) => 3,
            Self::Output(_) => 4,
            Self::Other(_) => 1,
        }
    }
}

impl From<SolverError> for HarnessError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Infeasible { .. } => Self::Infeasible(e.to_string()),
            SolverError::InvalidCluster(_) | SolverError::BarrierTooShort { .. } => {
                Self::Parse(e.to_string())
            }
            SolverError::ScanTooLarge { .. } => Self::Other(e.to_string()),
        }
    }
}

impl From<SimError> for HarnessError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Solver(s) => s.into(),
            SimError::InvalidConfig(_) | SimError::Training(_) => Self::Parse(e.to_string()),
            SimError::EventLimit(_) => Self::Other(e.to_string()),
        }
    }
}

/// Command-line overrides for `simulate` and `sweep`.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub output_dir: Option<PathBuf>,
    pub seed_override: Option<u64>,
}

impl RunOptions {
    /// Reads the seed override from `HETSYNC_SEED`, if set.
    pub fn from_env(output_dir: Option<PathBuf>) -> Result<Self, HarnessError> {
        let seed_override = match std::env::var(SEED_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| {
                HarnessError::Parse(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
            })?),
            Err(_) => None,
        };
        Ok(Self {
            output_dir,
            seed_override,
        })
    }

    fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(dir) = &self.output_dir {
            config.output_dir = dir.clone();
        }
        if let Some(seed) = self.seed_override {
            config.repeat_seeds = vec![seed];
        }
    }
}

pub fn cmd_solve(path: &Path) -> Result<BarrierSolution, HarnessError> {
    let cluster = load_cluster(path)?;
    let bound = cluster
        .staleness_bound
        .ok_or_else(|| HarnessError::Parse("cluster config needs staleness_bound".into()))?;
    Ok(solve_barrier(&cluster.to_spec(bound)?)?)
}

fn prepare_output(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)
        .map_err(|e| HarnessError::Output(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents)
        .map_err(|e| HarnessError::Output(format!("cannot write {}: {e}", path.display())))
}

fn load_with(path: &Path, options: &RunOptions) -> Result<ExperimentConfig, HarnessError> {
    let mut config = ExperimentConfig::load(path)?;
    options.apply(&mut config);
    Ok(config)
}

struct Run {
    strategy: StrategySpec,
    seed: u64,
    report: SimReport,
}

fn run_all(
    config: &ExperimentConfig,
    strategies: &[StrategySpec],
) -> Result<Vec<Run>, HarnessError> {
    let jobs: Vec<(StrategySpec, u64)> = strategies
        .iter()
        .flat_map(|&s| config.repeat_seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    jobs.into_par_iter()
        .map(|(strategy, seed)| {
            let sim = config.sim_config(strategy, seed)?;
            Ok(Run {
                strategy,
                seed,
                report: simulate(&sim)?,
            })
        })
        .collect()
}

/// Runs every `(strategy, seed)` pair and writes metrics, event logs and
/// `summary.json`.
pub fn cmd_simulate(path: &Path, options: &RunOptions) -> Result<Summary, HarnessError> {
    let config = load_with(path, options)?;
    // Fail on infeasible strategies before creating any output.
    let cluster = config.sim_config(StrategySpec::Bsp, 0)?.cluster;
    for s in &config.strategies {
        plan_round(s, &cluster)?;
    }
    prepare_output(&config.output_dir)?;

    let runs = run_all(&config, &config.strategies)?;
    for run in &runs {
        let stem = format!("{}_seed{}", run.strategy.label(), run.seed);
        write_file(
            &config.output_dir.join(format!("metrics_{stem}.csv")),
            &metrics_csv(&run.strategy.label(), run.seed, &run.report),
        )?;
        write_file(
            &config.output_dir.join(format!("events_{stem}.log")),
            &run.report.event_log(),
        )?;
    }

    let summary = Summary::build(
        &config,
        runs.iter().map(|r| (r.strategy, r.seed, &r.report)),
    );
    write_file(&config.output_dir.join("summary.json"), &summary.to_json())?;
    Ok(summary)
}

/// Sweeps the load-balanced staleness bound `M` over `from..=to`.
pub fn cmd_sweep(
    path: &Path,
    param: &str,
    from: u64,
    to: u64,
    options: &RunOptions,
) -> Result<Vec<SweepRow>, HarnessError> {
    if !param.eq_ignore_ascii_case("m") {
        return Err(HarnessError::Parse(format!(
            "unsupported sweep parameter {param:?}; only M is supported"
        )));
    }
    if from == 0 || from > to {
        return Err(HarnessError::Parse(format!(
            "invalid sweep range {from}..{to}"
        )));
    }
    let config = load_with(path, options)?;
    let base = config.sim_config(StrategySpec::Bsp, 0)?.cluster;
    prepare_output(&config.output_dir)?;

    let mut rows = Vec::new();
    for m in from..=to {
        let solution = match solve_barrier(&base.with_staleness_bound(m)?) {
            Ok(sol) => sol,
            Err(SolverError::Infeasible { .. }) => {
                rows.push(SweepRow::infeasible(m));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let strategy = StrategySpec::LoadBalanced { staleness_bound: m };
        let runs = run_all(&config, &[strategy])?;
        let k = runs.len() as f64;
        let idle = runs.iter().map(|r| idle_fraction(&r.report)).sum::<f64>() / k;
        let loss = runs
            .iter()
            .map(|r| r.report.loss_curve.last().map_or(f64::NAN, |p| p.loss))
            .sum::<f64>()
            / k;
        rows.push(SweepRow::feasible(m, &solution, idle, loss));
    }
    write_file(&config.output_dir.join("sweep_m.csv"), &sweep_csv(&rows))?;
    Ok(rows)
}
