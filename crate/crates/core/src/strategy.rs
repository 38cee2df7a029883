//! Synchronization paradigms as pure decision policies.
//!
//! Barrier strategies (BSP, uniform local SGD, load-balanced local SGD) give
//! every worker a per-round step target and average all models once every
//! worker has met its target. ASP never blocks. SSP blocks a worker whose
//! iteration clock runs more than `s` ahead of the slowest worker.

use serde::{Deserialize, Serialize};

use crate::barrier::{solve_barrier, BarrierSolution, ClusterSpec, SolverError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    Bsp,
    Asp,
    Ssp {
        stale_threshold: u64,
    },
    #[serde(rename = "local")]
    LocalUniform {
        period_steps: u64,
    },
    LoadBalanced {
        staleness_bound: u64,
    },
}

impl StrategySpec {
    /// Config name of the strategy family.
    pub fn name(&self) -> &'static str {
        match self {
            Self::Bsp => "bsp",
            Self::Asp => "asp",
            Self::Ssp { .. } => "ssp",
            Self::LocalUniform { .. } => "local",
            Self::LoadBalanced { .. } => "load_balanced",
        }
    }

    /// Name plus parameter, unique per distinct spec; used for file names.
    pub fn label(&self) -> String {
        match self {
            Self::Bsp | Self::Asp => self.name().to_string(),
            Self::Ssp { stale_threshold } => format!("ssp_s{stale_threshold}"),
            Self::LocalUniform { period_steps } => format!("local_h{period_steps}"),
            Self::LoadBalanced { staleness_bound } => format!("load_balanced_m{staleness_bound}"),
        }
    }

    pub fn is_barrier(&self) -> bool {
        matches!(
            self,
            Self::Bsp | Self::LocalUniform { .. } | Self::LoadBalanced { .. }
        )
    }

    pub fn validate(&self) -> Result<(), String> {
        let (what, value) = match *self {
            Self::Bsp | Self::Asp => return Ok(()),
            Self::Ssp { stale_threshold } => ("stale_threshold", stale_threshold),
            Self::LocalUniform { period_steps } => ("period_steps", period_steps),
            Self::LoadBalanced { staleness_bound } => ("staleness_bound", staleness_bound),
        };
        if value == 0 {
            return Err(format!("{} must be at least 1", what));
        }
        Ok(())
    }
}

/// Per-round step targets for barrier strategies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoundPlan {
    Barrier {
        /// Local steps each worker performs per round, aligned with workers.
        targets: Vec<u64>,
        /// Nominal round length in ticks without jitter.
        period_ticks: u64,
        /// Present for the load-balanced strategy.
        solution: Option<BarrierSolution>,
    },
    /// ASP and SSP decide step by step.
    Unplanned,
}

impl RoundPlan {
    pub fn target(&self, worker: usize) -> Option<u64> {
        match self {
            Self::Barrier { targets, .. } => targets.get(worker).copied(),
            Self::Unplanned => None,
        }
    }
}

pub fn plan_round(
    strategy: &StrategySpec,
    cluster: &ClusterSpec,
) -> Result<RoundPlan, SolverError> {
    let n = cluster.len();
    let slowest = cluster.max_iter_ticks();
    let plan = match *strategy {
        StrategySpec::Bsp => RoundPlan::Barrier {
            targets: vec![1; n],
            period_ticks: slowest,
            solution: None,
        },
        StrategySpec::LocalUniform { period_steps } => RoundPlan::Barrier {
            targets: vec![period_steps; n],
            period_ticks: period_steps * slowest,
            solution: None,
        },
        StrategySpec::LoadBalanced { staleness_bound } => {
            let solution = solve_barrier(&cluster.with_staleness_bound(staleness_bound)?)?;
            RoundPlan::Barrier {
                targets: solution.local_steps.clone(),
                period_ticks: solution.barrier_ticks,
                solution: Some(solution),
            }
        }
        StrategySpec::Asp | StrategySpec::Ssp { .. } => RoundPlan::Unplanned,
    };
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WorkerProgress {
    /// Position of the worker in the cluster.
    pub worker: usize,
    /// Iterations since the last global synchronization.
    pub local_step: u64,
    /// Iterations since the start of the run; the SSP clock.
    pub clock: u64,
    /// Completed synchronization rounds.
    pub round: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncDecision {
    Compute,
    WaitForBarrier,
    WaitForStragglers,
    Synchronize,
}

pub fn next_decision(
    strategy: &StrategySpec,
    me: &WorkerProgress,
    all: &[WorkerProgress],
    plan: &RoundPlan,
) -> SyncDecision {
    match *strategy {
        StrategySpec::Asp => SyncDecision::Compute,
        StrategySpec::Ssp { stale_threshold } => {
            let slowest = all.iter().map(|p| p.clock).min().unwrap_or(me.clock);
            if me.clock - slowest.min(me.clock) <= stale_threshold {
                SyncDecision::Compute
            } else {
                SyncDecision::WaitForStragglers
            }
        }
        StrategySpec::Bsp
        | StrategySpec::LocalUniform { .. }
        | StrategySpec::LoadBalanced { .. } => {
            let target = |p: &WorkerProgress| plan.target(p.worker).unwrap_or(0);
            if me.local_step < target(me) {
                SyncDecision::Compute
            } else if all.iter().all(|p| p.local_step >= target(p)) {
                SyncDecision::Synchronize
            } else {
                SyncDecision::WaitForBarrier
            }
        }
    }
}
