//! Learnable models and the SGD primitives shared by every strategy.
//!
//! Two binary classifiers are supported: logistic regression and a two-layer
//! perceptron with a tanh hidden layer. Both are trained with mean
//! cross-entropy on labels in `{0, 1}` and keep their parameters in one flat
//! vector so that workers can be averaged entrywise.

use std::borrow::Borrow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Standard deviation of the score noise added before thresholding labels.
pub const LABEL_NOISE_STD: f64 = 0.5;

/// Default hidden width of the two-layer perceptron.
pub const DEFAULT_HIDDEN_UNITS: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainingError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("no models to average")]
    NoModels,

    #[error("parameter vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("update produced a non-finite parameter at index {0}")]
    NonFinite(usize),

    #[error("shard {0} is empty")]
    EmptyShard(usize),

    #[error("invalid task: {0}")]
    InvalidTask(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example {
    pub features: Vec<f64>,
    /// `0.0` or `1.0`.
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub feature_dim: usize,
}

/// Per-worker disjoint slices of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetShardSet {
    pub shards: Vec<Vec<Example>>,
    pub feature_dim: usize,
}

impl DatasetShardSet {
    pub fn smallest_shard(&self) -> usize {
        self.shards.iter().map(Vec::len).min().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LogisticRegression,
    TwoLayerMlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTask {
    pub kind: ModelKind,
    /// Feature dimension.
    pub dimension: usize,
    /// Hidden width; only used by the perceptron.
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainingTask {
    pub fn logistic(dimension: usize, learning_rate: f64, batch_size: usize, seed: u64) -> Self {
        Self {
            kind: ModelKind::LogisticRegression,
            dimension,
            hidden_units: DEFAULT_HIDDEN_UNITS,
            learning_rate,
            batch_size,
            seed,
        }
    }

    pub fn mlp(dimension: usize, learning_rate: f64, batch_size: usize, seed: u64) -> Self {
        Self {
            kind: ModelKind::TwoLayerMlp,
            ..Self::logistic(dimension, learning_rate, batch_size, seed)
        }
    }

    pub fn param_count(&self) -> usize {
        match self.kind {
            ModelKind::LogisticRegression => self.dimension + 1,
            ModelKind::TwoLayerMlp => self.hidden_units * (self.dimension + 2) + 1,
        }
    }

    pub fn validate(&self) -> Result<(), TrainingError> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(TrainingError::InvalidTask(format!(
                "learning rate {} must be finite and nonnegative",
                self.learning_rate
            )));
        }
        if self.dimension == 0 || self.batch_size == 0 {
            return Err(TrainingError::InvalidTask(
                "dimension and batch size must be positive".into(),
            ));
        }
        if self.kind == ModelKind::TwoLayerMlp && self.hidden_units == 0 {
            return Err(TrainingError::InvalidTask(
                "hidden width must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Flat parameter vector plus the number of local iterations behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub params: Vec<f64>,
    pub step_count: u64,
}

impl ModelState {
    /// Initial parameters: zeros for logistic regression, small seeded
    /// uniform weights for the perceptron (zero hidden weights would never
    /// break symmetry).
    pub fn initial(task: &TrainingTask) -> Self {
        let params = match task.kind {
            ModelKind::LogisticRegression => vec![0.0; task.param_count()],
            ModelKind::TwoLayerMlp => {
                let mut rng = ChaCha8Rng::seed_from_u64(task.seed);
                rng.set_stream(1);
                let (d, h) = (task.dimension, task.hidden_units);
                let in_scale = 1.0 / (d as f64).sqrt();
                let out_scale = 1.0 / (h as f64).sqrt();
                let mut p = Vec::with_capacity(task.param_count());
                p.extend((0..h * d).map(|_| rng.random_range(-in_scale..in_scale)));
                p.extend(std::iter::repeat_n(0.0, h));
                p.extend((0..h).map(|_| rng.random_range(-out_scale..out_scale)));
                p.push(0.0);
                p
            }
        };
        Self {
            params,
            step_count: 0,
        }
    }

    /// True when both parameter vectors match bit for bit.
    pub fn bit_identical(&self, other: &Self) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Draws `n` labeled examples. Features are i.i.d. standard normal; the label
/// is 1 when `w_true · x + noise > 0`, with `w_true` a seeded unit vector.
pub fn generate_synthetic_dataset(
    n: usize,
    dim: usize,
    seed: u64,
) -> Result<Dataset, TrainingError> {
    if n < 10 || dim < 2 {
        return Err(TrainingError::InvalidTask(format!(
            "synthetic data needs n >= 10 and dim >= 2, got n={n}, dim={dim}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w_true: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = w_true.iter().map(|w| w * w).sum::<f64>().sqrt();
    w_true.iter_mut().for_each(|w| *w /= norm);

    let examples = (0..n)
        .map(|_| {
            let features: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let noise: f64 = rng.sample::<f64, _>(StandardNormal) * LABEL_NOISE_STD;
            let score = dot(&w_true, &features) + noise;
            Example {
                features,
                label: if score > 0.0 { 1.0 } else { 0.0 },
            }
        })
        .collect();
    Ok(Dataset {
        examples,
        feature_dim: dim,
    })
}

/// Splits the dataset into contiguous shards sized in proportion to
/// `weights`. Shard `i` receives `floor(n * w_i / sum w)` examples and the
/// leftover examples go one each to the earliest shards.
pub fn partition(dataset: &Dataset, weights: &[u64]) -> Result<DatasetShardSet, TrainingError> {
    let n = dataset.examples.len();
    let total: u64 = weights.iter().sum();
    if weights.is_empty() || total == 0 {
        return Err(TrainingError::InvalidTask(
            "partition weights sum to zero".into(),
        ));
    }
    let mut sizes: Vec<usize> = weights
        .iter()
        .map(|&w| (n as u128 * w as u128 / total as u128) as usize)
        .collect();
    let leftover = n - sizes.iter().sum::<usize>();
    sizes.iter_mut().take(leftover).for_each(|s| *s += 1);
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(TrainingError::EmptyShard(empty));
    }

    let mut shards = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for size in sizes {
        shards.push(dataset.examples[start..start + size].to_vec());
        start += size;
    }
    Ok(DatasetShardSet {
        shards,
        feature_dim: dataset.feature_dim,
    })
}

/// Sequential wrap-around batch selection over one shard.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BatchCursor {
    position: usize,
}

impl BatchCursor {
    pub fn next_batch<'a>(&mut self, shard: &'a [Example], batch_size: usize) -> Vec<&'a Example> {
        let batch = (0..batch_size)
            .map(|k| &shard[(self.position + k) % shard.len()])
            .collect();
        self.position = (self.position + batch_size) % shard.len();
        batch
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-[y ln σ(z) + (1-y) ln(1-σ(z))]` in a form that does not overflow.
fn cross_entropy(z: f64, y: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
}

fn check_dims(
    task: &TrainingTask,
    model: &ModelState,
    features: &[f64],
) -> Result<(), TrainingError> {
    if model.params.len() != task.param_count() {
        return Err(TrainingError::DimensionMismatch {
            expected: task.param_count(),
            found: model.params.len(),
        });
    }
    if features.len() != task.dimension {
        return Err(TrainingError::DimensionMismatch {
            expected: task.dimension,
            found: features.len(),
        });
    }
    Ok(())
}

/// Views into the perceptron's flat parameter layout:
/// `[W1 (h × d, row-major) | b1 (h) | w2 (h) | b2]`.
struct MlpView<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: f64,
}

impl<'a> MlpView<'a> {
    fn new(params: &'a [f64], d: usize, h: usize) -> Self {
        let (w1, rest) = params.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, rest) = rest.split_at(h);
        Self {
            w1,
            b1,
            w2,
            b2: rest[0],
        }
    }

    fn hidden(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        for (j, a) in out.iter_mut().enumerate() {
            *a = (dot(&self.w1[j * d..(j + 1) * d], x) + self.b1[j]).tanh();
        }
    }
}

fn logit(params: &[f64], x: &[f64], task: &TrainingTask, hidden: &mut [f64]) -> f64 {
    match task.kind {
        ModelKind::LogisticRegression => dot(&params[..task.dimension], x) + params[task.dimension],
        ModelKind::TwoLayerMlp => {
            let view = MlpView::new(params, task.dimension, task.hidden_units);
            view.hidden(x, hidden);
            dot(view.w2, hidden) + view.b2
        }
    }
}

/// Mean cross-entropy over the batch and its exact gradient.
pub fn loss_and_gradient<E: Borrow<Example>>(
    model: &ModelState,
    batch: &[E],
    task: &TrainingTask,
) -> Result<(f64, Vec<f64>), TrainingError> {
    if batch.is_empty() {
        return Err(TrainingError::EmptyBatch);
    }
    let (d, h) = (task.dimension, task.hidden_units);
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; task.param_count()];
    let mut hidden = vec![0.0; h];
    let mut loss = 0.0;

    for ex in batch {
        let ex = ex.borrow();
        check_dims(task, model, &ex.features)?;
        let x = &ex.features;
        let z = logit(&model.params, x, task, &mut hidden);
        loss += cross_entropy(z, ex.label);
        let dz = (sigmoid(z) - ex.label) * scale;

        match task.kind {
            ModelKind::LogisticRegression => {
                for (g, xi) in grad[..d].iter_mut().zip(x) {
                    *g += dz * xi;
                }
                grad[d] += dz;
            }
            ModelKind::TwoLayerMlp => {
                let view = MlpView::new(&model.params, d, h);
                let (g_w1, rest) = grad.split_at_mut(h * d);
                let (g_b1, rest) = rest.split_at_mut(h);
                let (g_w2, g_b2) = rest.split_at_mut(h);
                g_b2[0] += dz;
                for j in 0..h {
                    g_w2[j] += dz * hidden[j];
                    let da = dz * view.w2[j] * (1.0 - hidden[j] * hidden[j]);
                    g_b1[j] += da;
                    for (g, xi) in g_w1[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *g += da * xi;
                    }
                }
            }
        }
    }
    Ok((loss * scale, grad))
}

/// `params - learning_rate * gradient`, one more step on the counter.
pub fn apply_gradient(
    model: &ModelState,
    gradient: &[f64],
    learning_rate: f64,
) -> Result<ModelState, TrainingError> {
    if gradient.len() != model.params.len() {
        return Err(TrainingError::LengthMismatch(
            model.params.len(),
            gradient.len(),
        ));
    }
    let params: Vec<f64> = model
        .params
        .iter()
        .zip(gradient)
        .map(|(p, g)| p - learning_rate * g)
        .collect();
    if let Some(bad) = params.iter().position(|p| !p.is_finite()) {
        return Err(TrainingError::NonFinite(bad));
    }
    Ok(ModelState {
        params,
        step_count: model.step_count + 1,
    })
}

pub fn sgd_step<E: Borrow<Example>>(
    model: &ModelState,
    batch: &[E],
    task: &TrainingTask,
) -> Result<ModelState, TrainingError> {
    let (_, grad) = loss_and_gradient(model, batch, task)?;
    apply_gradient(model, &grad, task.learning_rate)
}

/// Entrywise arithmetic mean. The step counter of the result is the largest
/// input counter.
pub fn average_models(models: &[ModelState]) -> Result<ModelState, TrainingError> {
    let weights = vec![1.0; models.len()];
    average_models_weighted(models, &weights)
}

/// Weighted entrywise mean, `sum(w_k x_k) / sum(w_k)`.
pub fn average_models_weighted(
    models: &[ModelState],
    weights: &[f64],
) -> Result<ModelState, TrainingError> {
    let first = models.first().ok_or(TrainingError::NoModels)?;
    if weights.len() != models.len() {
        return Err(TrainingError::LengthMismatch(models.len(), weights.len()));
    }
    let len = first.params.len();
    let mut params = vec![0.0; len];
    for (m, &w) in models.iter().zip(weights) {
        if m.params.len() != len {
            return Err(TrainingError::LengthMismatch(len, m.params.len()));
        }
        for (acc, p) in params.iter_mut().zip(&m.params) {
            *acc += w * p;
        }
    }
    let total: f64 = weights.iter().sum();
    params.iter_mut().for_each(|p| *p /= total);
    Ok(ModelState {
        params,
        step_count: models.iter().map(|m| m.step_count).max().unwrap_or(0),
    })
}

/// Mean loss and 0/1 accuracy over `examples`. A predicted probability of
/// exactly one half counts as class 0.
pub fn evaluate<E: Borrow<Example>>(
    model: &ModelState,
    examples: &[E],
    task: &TrainingTask,
) -> Result<(f64, f64), TrainingError> {
    if examples.is_empty() {
        return Err(TrainingError::EmptyBatch);
    }
    let mut hidden = vec![0.0; task.hidden_units];
    let mut loss = 0.0;
    let mut correct = 0usize;
    for ex in examples {
        let ex = ex.borrow();
        check_dims(task, model, &ex.features)?;
        let z = logit(&model.params, &ex.features, task, &mut hidden);
        loss += cross_entropy(z, ex.label);
        let predicted = if z > 0.0 { 1.0 } else { 0.0 };
        if predicted == ex.label {
            correct += 1;
        }
    }
    let n = examples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}
