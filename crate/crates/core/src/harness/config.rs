//! JSON experiment and cluster configs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::barrier::ClusterSpec;
use crate::sim::{Averaging, SimConfig};
use crate::strategy::StrategySpec;
use crate::training::{ModelKind, TrainingTask, DEFAULT_HIDDEN_UNITS};

/// Default learning rate for the logistic task at desk scale.
pub const DEFAULT_LEARNING_RATE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    /// Ticks per local iteration; worker ids are the list positions.
    pub iter_ticks: Vec<u64>,
    /// `M`. Required by `solve`, unused by `simulate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub staleness_bound: Option<u64>,
}

impl ClusterConfig {
    pub fn to_spec(&self, staleness_bound: u64) -> Result<ClusterSpec, HarnessError> {
        ClusterSpec::from_iter_ticks(&self.iter_ticks, staleness_bound)
            .map_err(|e| HarnessError::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    #[serde(default = "default_kind")]
    pub kind: ModelKind,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default = "default_examples")]
    pub examples: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_hidden_units")]
    pub hidden_units: usize,
}

fn default_kind() -> ModelKind {
    ModelKind::LogisticRegression
}
fn default_dimension() -> usize {
    10
}
fn default_examples() -> usize {
    1000
}
fn default_learning_rate() -> f64 {
    DEFAULT_LEARNING_RATE
}
fn default_batch_size() -> usize {
    16
}
fn default_hidden_units() -> usize {
    DEFAULT_HIDDEN_UNITS
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            dimension: default_dimension(),
            examples: default_examples(),
            learning_rate: default_learning_rate(),
            batch_size: default_batch_size(),
            hidden_units: default_hidden_units(),
        }
    }
}

impl TaskConfig {
    pub fn training_task(&self, seed: u64) -> TrainingTask {
        TrainingTask {
            kind: self.kind,
            dimension: self.dimension,
            hidden_units: self.hidden_units,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cluster: ClusterConfig,
    pub strategies: Vec<StrategySpec>,
    #[serde(default)]
    pub task: TaskConfig,
    pub horizon_ticks: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every_ticks: u64,
    #[serde(default)]
    pub jitter_pct: f64,
    #[serde(default)]
    pub sync_latency_ticks: u64,
    #[serde(default)]
    pub averaging: Averaging,
    #[serde(default = "default_seeds")]
    pub repeat_seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Milliseconds per tick; only used to report iterations per hour.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tick_ms: Option<f64>,
}

fn default_eval_every() -> u64 {
    50
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("hetsync-out")
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&read_config(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: &str| Err(HarnessError::Parse(msg.to_string()));
        if self.strategies.is_empty() {
            return bad("strategies must not be empty");
        }
        if self.repeat_seeds.is_empty() {
            return bad("repeat_seeds must not be empty");
        }
        for s in &self.strategies {
            s.validate().map_err(HarnessError::Parse)?;
        }
        if let Some(ms) = self.tick_ms {
            if !(ms.is_finite() && ms > 0.0) {
                return bad("tick_ms must be positive");
            }
        }
        self.cluster.to_spec(1)?;
        Ok(())
    }

    /// The simulation for one `(strategy, seed)` run. The seed drives both
    /// the data/initialisation and the jitter stream.
    pub fn sim_config(&self, strategy: StrategySpec, seed: u64) -> Result<SimConfig, HarnessError> {
        let bound = self.cluster.staleness_bound.unwrap_or(1);
        Ok(SimConfig {
            cluster: self.cluster.to_spec(bound)?,
            strategy,
            task: self.task.training_task(seed),
            dataset_size: self.task.examples,
            horizon_ticks: self.horizon_ticks,
            eval_every_ticks: self.eval_every_ticks,
            jitter_pct: self.jitter_pct,
            seed,
            sync_latency_ticks: self.sync_latency_ticks,
            averaging: self.averaging,
        })
    }
}

pub fn read_config(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path)
        .map_err(|e| HarnessError::Parse(format!("cannot read {}: {e}", path.display())))
}

pub fn load_cluster(path: &Path) -> Result<ClusterConfig, HarnessError> {
    serde_json::from_str(&read_config(path)?).map_err(|e| HarnessError::Parse(e.to_string()))
}
