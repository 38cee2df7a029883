//! Straight-line reference implementations used to cross-check the library.

use hetsync::training::{Example, ModelKind, TrainingTask};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Mean binary cross-entropy computed directly from the parameter layout
/// `[W1 (h x d, row-major) | b1 | w2 | b2]`, or `[w | b]` for logistic
/// regression.
pub fn reference_loss(params: &[f64], batch: &[Example], task: &TrainingTask) -> f64 {
    let d = task.dimension;
    let mut total = 0.0;
    for ex in batch {
        let z = match task.kind {
            ModelKind::LogisticRegression => {
                let weights = &params[..d];
                params[d]
                    + weights
                        .iter()
                        .zip(&ex.features)
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
            }
            ModelKind::TwoLayerMlp => {
                let h = task.hidden_units;
                let b1 = h * d;
                let w2 = b1 + h;
                let mut z = params[w2 + h];
                for j in 0..h {
                    let mut a = params[b1 + j];
                    for k in 0..d {
                        a += params[j * d + k] * ex.features[k];
                    }
                    z += params[w2 + j] * a.tanh();
                }
                z
            }
        };
        // log(1 + e^{-z}) for a positive label, log(1 + e^{z}) otherwise.
        let signed = if ex.label > 0.5 { -z } else { z };
        total += signed.max(0.0) + (-signed.abs()).exp().ln_1p();
    }
    total / batch.len() as f64
}

/// Central finite-difference gradient of [`reference_loss`].
pub fn finite_difference(params: &[f64], batch: &[Example], task: &TrainingTask) -> Vec<f64> {
    let mut probe = params.to_vec();
    (0..params.len())
        .map(|k| {
            let step = 1e-6 * params[k].abs().max(1.0);
            probe[k] = params[k] + step;
            let up = reference_loss(&probe, batch, task);
            probe[k] = params[k] - step;
            let down = reference_loss(&probe, batch, task);
            probe[k] = params[k];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, 1e-8)` with Euclidean norms.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-8)
}

/// A random task, parameter vector and batch for gradient checks.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    kind: ModelKind,
) -> (TrainingTask, Vec<f64>, Vec<Example>) {
    let dimension = rng.random_range(1..=8);
    let mut task = match kind {
        ModelKind::LogisticRegression => TrainingTask::logistic(dimension, 0.1, 4, 0),
        ModelKind::TwoLayerMlp => TrainingTask::mlp(dimension, 0.1, 4, 0),
    };
    task.hidden_units = rng.random_range(1..=6);
    let params = (0..task.param_count())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let batch = (0..rng.random_range(1..=8))
        .map(|_| Example {
            features: (0..dimension)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect(),
            label: if rng.random_bool(0.5) { 1.0 } else { 0.0 },
        })
        .collect();
    (task, params, batch)
}

/// Compensated (Neumaier) sum.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
