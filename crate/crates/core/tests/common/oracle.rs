//! Exhaustive reference for the barrier solver. Shares no code with it.
//!
//! The candidate window is every `T` from the slowest iteration time up to
//! the first `T` whose step spread reaches `M`, additionally capped at one
//! full `lcm(iter_ticks)` period (the wait pattern repeats after that, which
//! is the only way a homogeneous cluster's window ends).

use super::{BarrierSolution, ClusterSpec, SolverError};

fn lcm_of(ticks: &[u64]) -> u128 {
    fn gcd(a: u128, b: u128) -> u128 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    ticks
        .iter()
        .fold(1u128, |acc, &t| acc / gcd(acc, t as u128) * t as u128)
}

/// Spread of per-worker step counts, computed as `max tau - min tau`.
fn spread(t: u64, ticks: &[u64]) -> u64 {
    let steps: Vec<u64> = ticks.iter().map(|&x| t / x).collect();
    steps.iter().max().unwrap() - steps.iter().min().unwrap()
}

pub fn oracle_solve_barrier(cluster: &ClusterSpec) -> Result<BarrierSolution, SolverError> {
    let ticks: Vec<u64> = cluster.workers().iter().map(|w| w.iter_ticks).collect();
    let m = cluster.staleness_bound();
    let start = *ticks.iter().max().unwrap();

    let first_gap = spread(start, &ticks);
    if first_gap >= m {
        return Err(SolverError::Infeasible {
            gap: first_gap,
            initial_barrier: start,
            staleness_bound: m,
        });
    }

    let period_end = start as u128 + lcm_of(&ticks);
    let mut candidates = Vec::new();
    let mut max_wait_time = Vec::new();
    let mut t = start;
    while spread(t, &ticks) < m && (t as u128) < period_end {
        let waits: Vec<u64> = ticks.iter().map(|&x| t % x).collect();
        max_wait_time.push(*waits.iter().max().unwrap());
        candidates.push(t);
        t += 1;
    }

    let lowest = *max_wait_time.iter().min().unwrap();
    let index = max_wait_time.iter().position(|&w| w == lowest).unwrap();
    let best = candidates[index];

    let local_steps: Vec<u64> = ticks.iter().map(|&x| best / x).collect();
    let wait_ticks: Vec<u64> = ticks.iter().map(|&x| best % x).collect();
    Ok(BarrierSolution {
        barrier_ticks: best,
        local_steps,
        max_wait_ticks: *wait_ticks.iter().max().unwrap(),
        wait_ticks,
    })
}
