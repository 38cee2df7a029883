//! Deterministic discrete-event simulation of a parameter-server cluster.
//!
//! Time advances in integer ticks. Each worker alternates between computing
//! iterations of its profiled length and blocking as dictated by the
//! strategy. All events of one tick are processed in three phases:
//!
//! 1. iteration completions, in worker order (model updates happen here),
//! 2. the global barrier, if every worker has reached its round target,
//! 3. per-worker decisions: start the next iteration or block.
//!
//! Evaluation runs last, at tick 0, every `eval_every_ticks` and at the
//! horizon. Within a tick the emitted log is ordered by event
//! kind rank and then by worker id, which is exactly the processing order.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::{BarrierSolution, ClusterSpec, SolverError};
use crate::strategy::{
    next_decision, plan_round, RoundPlan, StrategySpec, SyncDecision, WorkerProgress,
};
use crate::training::{
    apply_gradient, average_models, average_models_weighted, evaluate, generate_synthetic_dataset,
    loss_and_gradient, partition, sgd_step, BatchCursor, Dataset, DatasetShardSet, ModelState,
    TrainingError, TrainingTask,
};

/// Hard cap on the number of logged events per run.
pub const MAX_EVENTS: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Solver(#[from] SolverError),

    #[error(transparent)]
    Training(#[from] TrainingError),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("event limit of {0} exceeded")]
    EventLimit(usize),
}

/// How worker models are combined at a barrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Plain `1/N` mean.
    #[default]
    Uniform,
    /// Weighted by each worker's local steps in the round.
    TauWeighted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub cluster: ClusterSpec,
    pub strategy: StrategySpec,
    pub task: TrainingTask,
    /// Number of synthetic examples generated from `task.seed`.
    pub dataset_size: usize,
    pub horizon_ticks: u64,
    pub eval_every_ticks: u64,
    /// Relative per-iteration time noise in `[0, 1)`; 0 disables it.
    pub jitter_pct: f64,
    /// Seeds the jitter stream only.
    pub seed: u64,
    /// Ticks every worker spends blocked after each global sync.
    pub sync_latency_ticks: u64,
    pub averaging: Averaging,
}

impl SimConfig {
    /// 1000 examples, one evaluation per 1% of the horizon, no jitter, no
    /// sync latency, uniform averaging.
    pub fn new(
        cluster: ClusterSpec,
        strategy: StrategySpec,
        task: TrainingTask,
        horizon_ticks: u64,
    ) -> Self {
        Self {
            cluster,
            strategy,
            task,
            dataset_size: 1000,
            horizon_ticks,
            eval_every_ticks: (horizon_ticks / 100).max(1),
            jitter_pct: 0.0,
            seed: 0,
            sync_latency_ticks: 0,
            averaging: Averaging::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    IterStart,
    IterEnd,
    BlockStart,
    BlockEnd,
    GlobalSync,
    /// A pushed gradient applied to the server parameters (ASP and SSP).
    /// `staleness` counts server updates between the pull and this apply.
    Apply {
        staleness: u64,
    },
    Eval {
        loss: f64,
        accuracy: f64,
    },
}

impl EventKind {
    /// Order of kinds within one tick.
    pub fn rank(&self) -> u8 {
        match self {
            Self::IterEnd => 0,
            Self::Apply { .. } => 1,
            Self::GlobalSync => 2,
            Self::BlockEnd => 3,
            Self::IterStart => 4,
            Self::BlockStart => 5,
            Self::Eval { .. } => 6,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::IterStart => "iter_start",
            Self::IterEnd => "iter_end",
            Self::BlockStart => "block_start",
            Self::BlockEnd => "block_end",
            Self::GlobalSync => "global_sync",
            Self::Apply { .. } => "apply",
            Self::Eval { .. } => "eval",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub tick: u64,
    /// `None` for cluster-wide events (global sync, evaluation).
    pub worker_id: Option<usize>,
    pub kind: EventKind,
}

impl SimEvent {
    pub fn order_key(&self) -> (u64, u8, Option<usize>) {
        (self.tick, self.kind.rank(), self.worker_id)
    }
}

/// One log line: `tick,worker_id,kind[,payload]`, with `-` for cluster-wide events.
impl fmt::Display for SimEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},", self.tick)?;
        match self.worker_id {
            Some(id) => write!(f, "{id},")?,
            None => f.write_str("-,")?,
        }
        f.write_str(self.kind.name())?;
        match self.kind {
            EventKind::Apply { staleness } => write!(f, ",{staleness}"),
            EventKind::Eval { loss, accuracy } => write!(f, ",{loss},{accuracy}"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct WorkerStats {
    /// Ticks spent on iterations that completed before the horizon.
    pub compute_ticks: u64,
    pub idle_ticks: u64,
    /// Ticks of the iteration still running at the horizon, if any.
    pub inflight_ticks: u64,
    pub iterations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalPoint {
    pub tick: u64,
    pub loss: f64,
    pub accuracy: f64,
    /// Iterations completed by all workers so far.
    pub iterations: u64,
    /// Idle ticks accumulated by all workers so far.
    pub idle_ticks: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub events: Vec<SimEvent>,
    pub per_worker: Vec<WorkerStats>,
    pub loss_curve: Vec<EvalPoint>,
    pub final_model: ModelState,
    pub horizon_ticks: u64,
    pub throughput_iters_per_ktick: f64,
    /// The solver's output for the load-balanced strategy.
    pub barrier: Option<BarrierSolution>,
    /// Largest difference between worker iteration clocks seen during the run.
    pub max_clock_gap: u64,
}

impl SimReport {
    pub fn total_iterations(&self) -> u64 {
        self.per_worker.iter().map(|w| w.iterations).sum()
    }

    /// Newline-terminated event log.
    pub fn event_log(&self) -> String {
        let mut out = String::with_capacity(self.events.len() * 16);
        for e in &self.events {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }
}

/// Total idle ticks over `N × horizon`.
pub fn idle_fraction(report: &SimReport) -> f64 {
    let idle: u64 = report.per_worker.iter().map(|w| w.idle_ticks).sum();
    idle as f64 / (report.per_worker.len() as f64 * report.horizon_ticks as f64)
}

/// Hooks into the run, used by tests that need more than the report.
pub trait SimObserver {
    /// Called right after models are averaged, with every worker's model.
    fn on_global_sync(&mut self, _tick: u64, _models: &[ModelState]) {}
}

pub struct NoopObserver;

impl SimObserver for NoopObserver {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Ready,
    Computing { since: u64 },
    Blocked { since: u64 },
}

struct Worker {
    id: usize,
    iter_ticks: u64,
    /// Local model for barrier strategies; the last pulled parameters otherwise.
    model: ModelState,
    pulled_version: u64,
    cursor: BatchCursor,
    progress: WorkerProgress,
    phase: Phase,
    started: u64,
    stats: WorkerStats,
}

/// Parameters held by the server under ASP and SSP.
struct Server {
    model: ModelState,
    version: u64,
}

struct Engine<'a, O: SimObserver> {
    config: &'a SimConfig,
    plan: RoundPlan,
    dataset: Dataset,
    shards: DatasetShardSet,
    workers: Vec<Worker>,
    server: Option<Server>,
    queue: BinaryHeap<Reverse<(u64, usize)>>,
    resume_at: u64,
    events: Vec<SimEvent>,
    pending: Vec<SimEvent>,
    loss_curve: Vec<EvalPoint>,
    max_clock_gap: u64,
    observer: &'a mut O,
}

fn validate(config: &SimConfig) -> Result<(), SimError> {
    let bad = |msg: String| Err(SimError::InvalidConfig(msg));
    config.task.validate()?;
    config
        .strategy
        .validate()
        .map_err(SimError::InvalidConfig)?;
    if config.horizon_ticks < config.cluster.max_iter_ticks() {
        return bad(format!(
            "horizon {} is shorter than the slowest iteration ({})",
            config.horizon_ticks,
            config.cluster.max_iter_ticks()
        ));
    }
    if config.eval_every_ticks == 0 {
        return bad("eval_every_ticks must be at least 1".into());
    }
    if !(0.0..1.0).contains(&config.jitter_pct) {
        return bad(format!(
            "jitter_pct {} must lie in [0, 1)",
            config.jitter_pct
        ));
    }
    Ok(())
}

impl<'a, O: SimObserver> Engine<'a, O> {
    fn new(config: &'a SimConfig, observer: &'a mut O) -> Result<Self, SimError> {
        validate(config)?;
        let plan = plan_round(&config.strategy, &config.cluster)?;
        let n = config.cluster.len();
        let weights = match &plan {
            RoundPlan::Barrier {
                solution: Some(sol),
                ..
            } => sol.local_steps.clone(),
            _ => vec![1; n],
        };
        let dataset = generate_synthetic_dataset(
            config.dataset_size,
            config.task.dimension,
            config.task.seed,
        )?;
        let shards = partition(&dataset, &weights)?;
        if config.task.batch_size > shards.smallest_shard() {
            return Err(SimError::InvalidConfig(format!(
                "batch size {} exceeds the smallest shard ({} examples)",
                config.task.batch_size,
                shards.smallest_shard()
            )));
        }

        let initial = ModelState::initial(&config.task);
        let workers = config
            .cluster
            .workers()
            .iter()
            .enumerate()
            .map(|(pos, profile)| Worker {
                id: profile.worker_id,
                iter_ticks: profile.iter_ticks,
                model: initial.clone(),
                pulled_version: 0,
                cursor: BatchCursor::default(),
                progress: WorkerProgress {
                    worker: pos,
                    ..Default::default()
                },
                phase: Phase::Ready,
                started: 0,
                stats: WorkerStats::default(),
            })
            .collect();
        let server = (!config.strategy.is_barrier()).then_some(Server {
            model: initial,
            version: 0,
        });

        Ok(Self {
            config,
            plan,
            dataset,
            shards,
            workers,
            server,
            queue: BinaryHeap::new(),
            resume_at: 0,
            events: Vec::new(),
            pending: Vec::new(),
            loss_curve: Vec::new(),
            max_clock_gap: 0,
            observer,
        })
    }

    fn emit(&mut self, tick: u64, worker_id: Option<usize>, kind: EventKind) {
        self.pending.push(SimEvent {
            tick,
            worker_id,
            kind,
        });
    }

    /// Duration of the worker's next iteration, with jitter keyed on
    /// `(seed, worker id, iteration index)`.
    fn iteration_ticks(&self, w: &Worker) -> u64 {
        let j = self.config.jitter_pct;
        if j == 0.0 {
            return w.iter_ticks;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(w.id as u64);
        rng.set_word_pos(w.started as u128 * 16);
        let factor: f64 = rng.random_range(1.0 - j..=1.0 + j);
        ((w.iter_ticks as f64 * factor).round() as u64).max(1)
    }

    fn finish_iteration(&mut self, pos: usize, now: u64) -> Result<(), SimError> {
        let task = &self.config.task;
        let w = &mut self.workers[pos];
        let Phase::Computing { since } = w.phase else {
            unreachable!("iteration end for a worker that is not computing");
        };
        let batch = w
            .cursor
            .next_batch(&self.shards.shards[pos], task.batch_size);
        let mut apply = None;
        match self.server.as_mut() {
            None => w.model = sgd_step(&w.model, &batch, task)?,
            Some(server) => {
                let (_, grad) = loss_and_gradient(&w.model, &batch, task)?;
                server.model = apply_gradient(&server.model, &grad, task.learning_rate)?;
                apply = Some(server.version - w.pulled_version);
                server.version += 1;
            }
        }
        w.phase = Phase::Ready;
        w.stats.compute_ticks += now - since;
        w.stats.iterations += 1;
        w.progress.local_step += 1;
        w.progress.clock += 1;
        let id = w.id;

        self.emit(now, Some(id), EventKind::IterEnd);
        if let Some(staleness) = apply {
            self.emit(now, Some(id), EventKind::Apply { staleness });
        }
        Ok(())
    }

    fn progress(&self) -> Vec<WorkerProgress> {
        self.workers.iter().map(|w| w.progress).collect()
    }

    fn mixed_model(&self, models: &[ModelState]) -> Result<ModelState, TrainingError> {
        match (self.config.averaging, &self.plan) {
            (Averaging::TauWeighted, RoundPlan::Barrier { targets, .. }) => {
                let weights: Vec<f64> = targets.iter().map(|&t| t as f64).collect();
                average_models_weighted(models, &weights)
            }
            _ => average_models(models),
        }
    }

    fn global_sync(&mut self, now: u64) -> Result<(), SimError> {
        let models: Vec<ModelState> = self.workers.iter().map(|w| w.model.clone()).collect();
        let averaged = self.mixed_model(&models)?;
        let latency = self.config.sync_latency_ticks;
        self.emit(now, None, EventKind::GlobalSync);
        for pos in 0..self.workers.len() {
            let w = &mut self.workers[pos];
            w.model = averaged.clone();
            w.progress.local_step = 0;
            w.progress.round += 1;
            let id = w.id;
            match (w.phase, latency) {
                (Phase::Blocked { since }, 0) => {
                    w.stats.idle_ticks += now - since;
                    w.phase = Phase::Ready;
                    self.emit(now, Some(id), EventKind::BlockEnd);
                }
                (Phase::Ready, 1..) => {
                    w.phase = Phase::Blocked { since: now };
                    self.emit(now, Some(id), EventKind::BlockStart);
                }
                _ => {}
            }
        }
        self.resume_at = now + latency;
        let synced: Vec<ModelState> = self.workers.iter().map(|w| w.model.clone()).collect();
        self.observer.on_global_sync(now, &synced);
        Ok(())
    }

    fn start_iteration(&mut self, pos: usize, now: u64) {
        let duration = self.iteration_ticks(&self.workers[pos]);
        let w = &mut self.workers[pos];
        let id = w.id;
        if let Phase::Blocked { since } = w.phase {
            w.stats.idle_ticks += now - since;
            self.pending.push(SimEvent {
                tick: now,
                worker_id: Some(id),
                kind: EventKind::BlockEnd,
            });
        }
        if let Some(server) = &self.server {
            w.model = server.model.clone();
            w.pulled_version = server.version;
        }
        w.phase = Phase::Computing { since: now };
        w.started += 1;
        self.queue.push(Reverse((now + duration, pos)));
        self.emit(now, Some(id), EventKind::IterStart);
    }

    fn decide(&mut self, now: u64) {
        if now < self.resume_at {
            return;
        }
        for pos in 0..self.workers.len() {
            if matches!(self.workers[pos].phase, Phase::Computing { .. }) {
                continue;
            }
            let all = self.progress();
            let decision = next_decision(&self.config.strategy, &all[pos], &all, &self.plan);
            match decision {
                SyncDecision::Compute => self.start_iteration(pos, now),
                // Synchronize here means a sync is pending in this same tick,
                // which phase 2 has already handled; treat it as a wait.
                SyncDecision::WaitForBarrier
                | SyncDecision::WaitForStragglers
                | SyncDecision::Synchronize => {
                    let w = &mut self.workers[pos];
                    if w.phase == Phase::Ready {
                        w.phase = Phase::Blocked { since: now };
                        let id = w.id;
                        self.emit(now, Some(id), EventKind::BlockStart);
                    }
                }
            }
        }
    }

    fn current_model(&self) -> Result<ModelState, TrainingError> {
        match &self.server {
            Some(server) => Ok(server.model.clone()),
            None => {
                let models: Vec<ModelState> =
                    self.workers.iter().map(|w| w.model.clone()).collect();
                self.mixed_model(&models)
            }
        }
    }

    fn eval(&mut self, now: u64) -> Result<(), SimError> {
        let model = self.current_model()?;
        let (loss, accuracy) = evaluate(&model, &self.dataset.examples, &self.config.task)?;
        let iterations = self.workers.iter().map(|w| w.stats.iterations).sum();
        let idle_ticks = self
            .workers
            .iter()
            .map(|w| match w.phase {
                Phase::Blocked { since } => w.stats.idle_ticks + (now - since),
                _ => w.stats.idle_ticks,
            })
            .sum();
        self.loss_curve.push(EvalPoint {
            tick: now,
            loss,
            accuracy,
            iterations,
            idle_ticks,
        });
        self.emit(now, None, EventKind::Eval { loss, accuracy });
        Ok(())
    }

    fn flush(&mut self) -> Result<(), SimError> {
        self.pending.sort_by_key(SimEvent::order_key);
        self.events.append(&mut self.pending);
        if self.events.len() > MAX_EVENTS {
            return Err(SimError::EventLimit(MAX_EVENTS));
        }
        Ok(())
    }

    fn run(mut self) -> Result<SimReport, SimError> {
        let horizon = self.config.horizon_ticks;
        let mut next_eval = 0;
        let mut now = 0;
        loop {
            while let Some(&Reverse((tick, pos))) = self.queue.peek() {
                if tick != now {
                    break;
                }
                self.queue.pop();
                self.finish_iteration(pos, now)?;
            }
            let clocks = self.workers.iter().map(|w| w.progress.clock);
            let gap = clocks.clone().max().unwrap_or(0) - clocks.min().unwrap_or(0);
            self.max_clock_gap = self.max_clock_gap.max(gap);

            if self.sync_due(now) {
                self.global_sync(now)?;
            }
            if now < horizon {
                self.decide(now);
            }
            if now == next_eval || now == horizon {
                self.eval(now)?;
            }
            if now == next_eval {
                next_eval += self.config.eval_every_ticks;
            }
            self.flush()?;

            if now >= horizon {
                break;
            }
            let mut next = horizon.min(next_eval);
            if let Some(&Reverse((tick, _))) = self.queue.peek() {
                next = next.min(tick);
            }
            if self.resume_at > now {
                next = next.min(self.resume_at);
            }
            now = next;
        }
        self.finish(horizon)
    }

    fn sync_due(&self, now: u64) -> bool {
        if !self.config.strategy.is_barrier() || now < self.resume_at {
            return false;
        }
        let all = self.progress();
        all.iter().any(|p| {
            next_decision(&self.config.strategy, p, &all, &self.plan) == SyncDecision::Synchronize
        })
    }

    fn finish(mut self, horizon: u64) -> Result<SimReport, SimError> {
        for w in &mut self.workers {
            match w.phase {
                Phase::Computing { since } => w.stats.inflight_ticks = horizon - since,
                Phase::Blocked { since } => w.stats.idle_ticks += horizon - since,
                Phase::Ready => {}
            }
        }
        let final_model = self.current_model()?;
        let per_worker: Vec<WorkerStats> = self.workers.iter().map(|w| w.stats).collect();
        let total: u64 = per_worker.iter().map(|w| w.iterations).sum();
        let barrier = match self.plan {
            RoundPlan::Barrier { solution, .. } => solution,
            RoundPlan::Unplanned => None,
        };
        Ok(SimReport {
            events: self.events,
            per_worker,
            loss_curve: self.loss_curve,
            final_model,
            horizon_ticks: horizon,
            throughput_iters_per_ktick: total as f64 * 1000.0 / horizon as f64,
            barrier,
            max_clock_gap: self.max_clock_gap,
        })
    }
}

pub fn simulate(config: &SimConfig) -> Result<SimReport, SimError> {
    simulate_with_observer(config, &mut NoopObserver)
}

pub fn simulate_with_observer<O: SimObserver>(
    config: &SimConfig,
    observer: &mut O,
) -> Result<SimReport, SimError> {
    Engine::new(config, observer)?.run()
}

/// Runs the config twice and compares event logs and final models bit for bit.
pub fn replay_check(config: &SimConfig) -> Result<bool, SimError> {
    let a = simulate(config)?;
    let b = simulate(config)?;
    let same_events = a.events.len() == b.events.len()
        && a.events
            .iter()
            .zip(&b.events)
            .all(|(x, y)| x.to_string() == y.to_string());
    Ok(same_events && a.final_model.bit_identical(&b.final_model))
}
