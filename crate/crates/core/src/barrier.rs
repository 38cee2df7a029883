//! Optimal global barrier period for heterogeneous workers.
//!
//! Every worker `i` needs `iter_ticks[i]` ticks per local iteration. Given a
//! barrier period `T`, worker `i` completes `floor(T / iter_ticks[i])` whole
//! iterations and then sits idle for `T mod iter_ticks[i]` ticks. The solver
//! picks the `T` that minimizes the largest of those idle remainders, subject
//! to the spread between the most and fewest local steps staying strictly
//! below the staleness bound `M`.
//!
//! The search is an ascending scan starting at the slowest worker's iteration
//! time. It stops at the first `T` whose step spread reaches `M`, and returns
//! the first `T` attaining the smallest maximum wait inside that window.

use serde::Serialize;
use thiserror::Error;

/// Upper limit on `workers × candidate barriers` evaluated by one solve.
pub const MAX_SCAN_EVALUATIONS: u128 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("invalid cluster: {0}")]
    InvalidCluster(String),

    #[error("barrier of {barrier_ticks} ticks is shorter than the slowest iteration ({max_iter_ticks} ticks)")]
    BarrierTooShort {
        barrier_ticks: u64,
        max_iter_ticks: u64,
    },

    #[error(
        "infeasible: staleness gap at the initial barrier T={initial_barrier} is {gap}, \
         which is not below the staleness bound M={staleness_bound}; raise M above {gap}"
    )]
    Infeasible {
        gap: u64,
        initial_barrier: u64,
        staleness_bound: u64,
    },

    #[error("barrier scan needs up to {evaluations} evaluations, above the limit of {limit}")]
    ScanTooLarge { evaluations: u128, limit: u128 },
}

/// A worker and its steady per-iteration time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WorkerProfile {
    pub worker_id: usize,
    /// Simulated ticks per local iteration, at least 1.
    pub iter_ticks: u64,
}

impl WorkerProfile {
    pub fn new(worker_id: usize, iter_ticks: u64) -> Self {
        Self {
            worker_id,
            iter_ticks,
        }
    }
}

/// Worker profiles plus the staleness bound `M`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterSpec {
    workers: Vec<WorkerProfile>,
    staleness_bound: u64,
}

impl ClusterSpec {
    pub fn new(workers: Vec<WorkerProfile>, staleness_bound: u64) -> Result<Self, SolverError> {
        if workers.is_empty() {
            return Err(SolverError::InvalidCluster("no workers".into()));
        }
        if staleness_bound == 0 {
            return Err(SolverError::InvalidCluster(
                "staleness bound must be at least 1".into(),
            ));
        }
        for (pos, w) in workers.iter().enumerate() {
            if w.iter_ticks == 0 {
                return Err(SolverError::InvalidCluster(format!(
                    "worker {} has zero iteration ticks",
                    w.worker_id
                )));
            }
            if workers[..pos].iter().any(|o| o.worker_id == w.worker_id) {
                return Err(SolverError::InvalidCluster(format!(
                    "duplicate worker id {}",
                    w.worker_id
                )));
            }
        }
        Ok(Self {
            workers,
            staleness_bound,
        })
    }

    /// Builds a cluster whose worker ids are the positions in `iter_ticks`.
    pub fn from_iter_ticks(iter_ticks: &[u64], staleness_bound: u64) -> Result<Self, SolverError> {
        let workers = iter_ticks
            .iter()
            .enumerate()
            .map(|(id, &t)| WorkerProfile::new(id, t))
            .collect();
        Self::new(workers, staleness_bound)
    }

    pub fn with_staleness_bound(&self, staleness_bound: u64) -> Result<Self, SolverError> {
        Self::new(self.workers.clone(), staleness_bound)
    }

    pub fn workers(&self) -> &[WorkerProfile] {
        &self.workers
    }

    pub fn len(&self) -> usize {
        self.workers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workers.is_empty()
    }

    pub fn staleness_bound(&self) -> u64 {
        self.staleness_bound
    }

    pub fn iter_ticks(&self) -> Vec<u64> {
        self.workers.iter().map(|w| w.iter_ticks).collect()
    }

    pub fn min_iter_ticks(&self) -> u64 {
        self.workers.iter().map(|w| w.iter_ticks).min().unwrap_or(1)
    }

    pub fn max_iter_ticks(&self) -> u64 {
        self.workers.iter().map(|w| w.iter_ticks).max().unwrap_or(1)
    }

    fn check_barrier(&self, barrier_ticks: u64) -> Result<(), SolverError> {
        let max_iter_ticks = self.max_iter_ticks();
        if barrier_ticks < max_iter_ticks {
            return Err(SolverError::BarrierTooShort {
                barrier_ticks,
                max_iter_ticks,
            });
        }
        Ok(())
    }
}

/// The chosen barrier period with per-worker step counts and idle remainders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BarrierSolution {
    pub barrier_ticks: u64,
    /// Complete local iterations per round, aligned with the cluster's workers.
    pub local_steps: Vec<u64>,
    /// Idle ticks per round, aligned with the cluster's workers.
    pub wait_ticks: Vec<u64>,
    pub max_wait_ticks: u64,
}

impl BarrierSolution {
    /// Evaluates the round layout for an arbitrary barrier `T >= max iter_ticks`.
    pub fn at(barrier_ticks: u64, cluster: &ClusterSpec) -> Result<Self, SolverError> {
        cluster.check_barrier(barrier_ticks)?;
        let local_steps = cluster
            .workers()
            .iter()
            .map(|w| barrier_ticks / w.iter_ticks)
            .collect();
        let wait_ticks: Vec<u64> = cluster
            .workers()
            .iter()
            .map(|w| wait_time(barrier_ticks, w.iter_ticks))
            .collect();
        let max_wait_ticks = wait_ticks.iter().copied().max().unwrap_or(0);
        Ok(Self {
            barrier_ticks,
            local_steps,
            wait_ticks,
            max_wait_ticks,
        })
    }
}

/// Idle ticks a worker spends before a barrier: `barrier_ticks mod iter_ticks`.
///
/// Panics if `iter_ticks` is zero.
pub fn wait_time(barrier_ticks: u64, iter_ticks: u64) -> u64 {
    barrier_ticks % iter_ticks
}

/// Largest per-worker wait for the given barrier.
pub fn max_wait(barrier_ticks: u64, cluster: &ClusterSpec) -> Result<u64, SolverError> {
    cluster.check_barrier(barrier_ticks)?;
    Ok(max_wait_unchecked(barrier_ticks, cluster.workers()))
}

/// `floor(T / min iter_ticks) - floor(T / max iter_ticks)`: the spread between
/// the most and the fewest local steps in one round.
pub fn staleness_gap(barrier_ticks: u64, cluster: &ClusterSpec) -> Result<u64, SolverError> {
    cluster.check_barrier(barrier_ticks)?;
    Ok(gap_unchecked(
        barrier_ticks,
        cluster.min_iter_ticks(),
        cluster.max_iter_ticks(),
    ))
}

fn max_wait_unchecked(barrier_ticks: u64, workers: &[WorkerProfile]) -> u64 {
    workers
        .iter()
        .map(|w| wait_time(barrier_ticks, w.iter_ticks))
        .max()
        .unwrap_or(0)
}

fn gap_unchecked(barrier_ticks: u64, fastest: u64, slowest: u64) -> u64 {
    barrier_ticks / fastest - barrier_ticks / slowest
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Worst-case number of barriers the scan visits. The scan can never pass
/// `lcm(iter_ticks)` (zero wait there ends it), nor the point where the
/// continuous lower bound on the gap already reaches `M`.
fn scan_length_bound(cluster: &ClusterSpec) -> u128 {
    // Saturate well above any budget so the product below cannot overflow.
    const CAP: u128 = 1 << 96;
    let start = cluster.max_iter_ticks() as u128;
    let fastest = cluster.min_iter_ticks() as u128;
    let lcm = cluster.workers().iter().fold(1u128, |acc, w| {
        let t = w.iter_ticks as u128;
        (acc / gcd(acc, t)).saturating_mul(t).min(CAP)
    });
    let gap_end = if fastest == start {
        CAP
    } else {
        // gap(T) > T (max - min) / (min max) - 1, so this T has gap >= M
        (cluster.staleness_bound() as u128 * fastest * start).div_ceil(start - fastest)
    };
    lcm.min(gap_end).saturating_sub(start) + 1
}

/// Finds the optimal barrier period `T*` for the cluster.
///
/// The scan starts at `T = max iter_ticks`, advances one tick at a time while
/// the staleness gap stays below `M`, and keeps the first `T` with the
/// smallest maximum wait. A maximum wait of zero cannot be improved upon, so
/// the scan ends there.
pub fn solve_barrier(cluster: &ClusterSpec) -> Result<BarrierSolution, SolverError> {
    let fastest = cluster.min_iter_ticks();
    let slowest = cluster.max_iter_ticks();
    let bound = cluster.staleness_bound();

    let initial_gap = gap_unchecked(slowest, fastest, slowest);
    if initial_gap >= bound {
        return Err(SolverError::Infeasible {
            gap: initial_gap,
            initial_barrier: slowest,
            staleness_bound: bound,
        });
    }

    let evaluations = scan_length_bound(cluster).saturating_mul(cluster.len() as u128);
    if evaluations > MAX_SCAN_EVALUATIONS {
        return Err(SolverError::ScanTooLarge {
            evaluations,
            limit: MAX_SCAN_EVALUATIONS,
        });
    }

    let workers = cluster.workers();
    let mut best_barrier = slowest;
    let mut best_wait = u64::MAX;
    let mut barrier = slowest;
    while gap_unchecked(barrier, fastest, slowest) < bound {
        let wait = max_wait_unchecked(barrier, workers);
        if wait < best_wait {
            best_wait = wait;
            best_barrier = barrier;
            if wait == 0 {
                break;
            }
        }
        barrier += 1;
    }

    BarrierSolution::at(best_barrier, cluster)
}

#[cfg(test)]
#[path = "../tests/common/oracle.rs"]
mod oracle;
