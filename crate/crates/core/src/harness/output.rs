//! CSV and JSON renderings of simulation results.

use std::fmt::Write as _;

use serde::Serialize;

use super::config::ExperimentConfig;
use crate::barrier::BarrierSolution;
use crate::sim::{idle_fraction, SimReport};
use crate::strategy::StrategySpec;

pub const METRICS_HEADER: &str = "strategy,seed,tick,loss,accuracy,iters,idle_frac";
pub const SWEEP_HEADER: &str = "m,barrier_ticks,max_wait,idle_fraction,final_loss,status";

pub fn metrics_csv(label: &str, seed: u64, report: &SimReport) -> String {
    let workers = report.per_worker.len() as u64;
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for p in &report.loss_curve {
        let idle_frac = if p.tick == 0 {
            0.0
        } else {
            p.idle_ticks as f64 / (workers * p.tick) as f64
        };
        let _ = writeln!(
            out,
            "{label},{seed},{},{},{},{},{idle_frac}",
            p.tick, p.loss, p.accuracy, p.iterations
        );
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub final_loss: f64,
    pub final_accuracy: f64,
    pub total_iterations: u64,
    pub throughput_iters_per_ktick: f64,
    pub idle_fraction: f64,
    pub max_clock_gap: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StrategySummary {
    pub strategy: StrategySpec,
    pub label: String,
    pub mean_final_loss: f64,
    pub mean_final_accuracy: f64,
    pub mean_throughput_iters_per_ktick: f64,
    /// Present when the config sets `tick_ms`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_throughput_iters_per_hour: Option<f64>,
    pub mean_idle_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub barrier: Option<BarrierSolution>,
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub iter_ticks: Vec<u64>,
    pub horizon_ticks: u64,
    pub strategies: Vec<StrategySummary>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

impl Summary {
    /// Groups runs by strategy, in the order strategies appear in the config.
    pub fn build<'a>(
        config: &ExperimentConfig,
        runs: impl IntoIterator<Item = (StrategySpec, u64, &'a SimReport)>,
    ) -> Self {
        let runs: Vec<_> = runs.into_iter().collect();
        let strategies = config
            .strategies
            .iter()
            .map(|&strategy| {
                let mine: Vec<_> = runs.iter().filter(|(s, _, _)| *s == strategy).collect();
                let per_seed: Vec<RunSummary> = mine
                    .iter()
                    .map(|(_, seed, report)| {
                        let last = report.loss_curve.last();
                        RunSummary {
                            seed: *seed,
                            final_loss: last.map_or(f64::NAN, |p| p.loss),
                            final_accuracy: last.map_or(f64::NAN, |p| p.accuracy),
                            total_iterations: report.total_iterations(),
                            throughput_iters_per_ktick: report.throughput_iters_per_ktick,
                            idle_fraction: idle_fraction(report),
                            max_clock_gap: report.max_clock_gap,
                        }
                    })
                    .collect();
                let throughput = mean(per_seed.iter().map(|r| r.throughput_iters_per_ktick));
                StrategySummary {
                    strategy,
                    label: strategy.label(),
                    mean_final_loss: mean(per_seed.iter().map(|r| r.final_loss)),
                    mean_final_accuracy: mean(per_seed.iter().map(|r| r.final_accuracy)),
                    mean_throughput_iters_per_ktick: throughput,
                    mean_throughput_iters_per_hour: config
                        .tick_ms
                        .map(|ms| throughput / 1000.0 * 3_600_000.0 / ms),
                    mean_idle_fraction: mean(per_seed.iter().map(|r| r.idle_fraction)),
                    barrier: mine.first().and_then(|(_, _, r)| r.barrier.clone()),
                    runs: per_seed,
                }
            })
            .collect();
        Self {
            iter_ticks: config.cluster.iter_ticks.clone(),
            horizon_ticks: config.horizon_ticks,
            strategies,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("summary serializes");
        text.push('\n');
        text
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub m: u64,
    pub barrier_ticks: Option<u64>,
    pub max_wait: Option<u64>,
    pub idle_fraction: Option<f64>,
    pub final_loss: Option<f64>,
}

impl SweepRow {
    pub fn feasible(
        m: u64,
        solution: &BarrierSolution,
        idle_fraction: f64,
        final_loss: f64,
    ) -> Self {
        Self {
            m,
            barrier_ticks: Some(solution.barrier_ticks),
            max_wait: Some(solution.max_wait_ticks),
            idle_fraction: Some(idle_fraction),
            final_loss: Some(final_loss),
        }
    }

    pub fn infeasible(m: u64) -> Self {
        Self {
            m,
            barrier_ticks: None,
            max_wait: None,
            idle_fraction: None,
            final_loss: None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.barrier_ticks.is_some()
    }
}

fn cell<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Infeasible values of `M` get empty cells and status `infeasible`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let status = if r.is_feasible() { "ok" } else { "infeasible" };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{status}",
            r.m,
            cell(r.barrier_ticks),
            cell(r.max_wait),
            cell(r.idle_fraction),
            cell(r.final_loss)
        );
    }
    out
}
