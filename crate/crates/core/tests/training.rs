mod common;

use common::reference::{
    finite_difference, neumaier_sum, random_instance, reference_loss, relative_error,
};
use hetsync::training::{
    average_models, average_models_weighted, loss_and_gradient, ModelKind, ModelState,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_gradients(kind: ModelKind, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..50 {
        let (task, params, batch) = random_instance(&mut rng, kind);
        let model = ModelState {
            params,
            step_count: 0,
        };
        let (loss, grad) = loss_and_gradient(&model, &batch, &task).unwrap();
        let expected = reference_loss(&model.params, &batch, &task);
        assert!(
            (loss - expected).abs() <= 1e-12 * expected.max(1.0),
            "{loss} vs {expected}"
        );
        let fd = finite_difference(&model.params, &batch, &task);
        let err = relative_error(&grad, &fd);
        assert!(err < 1e-5, "{kind:?}: relative error {err}");
    }
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    check_gradients(ModelKind::LogisticRegression, 11);
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    check_gradients(ModelKind::TwoLayerMlp, 12);
}

#[test]
fn loss_is_stable_for_large_logits() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (task, _, batch) = random_instance(&mut rng, ModelKind::LogisticRegression);
    let model = ModelState {
        params: vec![500.0; task.param_count()],
        step_count: 0,
    };
    let (loss, grad) = loss_and_gradient(&model, &batch, &task).unwrap();
    assert!(loss.is_finite());
    assert!(grad.iter().all(|g| g.is_finite()));
}

proptest! {
    #[test]
    fn average_matches_compensated_mean(seed in any::<u64>(), k in 1usize..12, len in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let models: Vec<ModelState> = (0..k)
            .map(|i| ModelState {
                params: (0..len).map(|_| rng.random_range(-10.0..10.0)).collect(),
                step_count: i as u64,
            })
            .collect();
        let avg = average_models(&models).unwrap();
        prop_assert_eq!(avg.step_count, k as u64 - 1);
        for j in 0..len {
            let reference = neumaier_sum(models.iter().map(|m| m.params[j])) / k as f64;
            prop_assert!((avg.params[j] - reference).abs() <= 1e-12 * reference.abs().max(1.0));
        }
    }

    #[test]
    fn weighted_average_matches_compensated_mean(seed in any::<u64>(), k in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let models: Vec<ModelState> = (0..k)
            .map(|_| ModelState {
                params: (0..5).map(|_| rng.random_range(-10.0..10.0)).collect(),
                step_count: 0,
            })
            .collect();
        let weights: Vec<f64> = (0..k).map(|_| rng.random_range(1..10) as f64).collect();
        let avg = average_models_weighted(&models, &weights).unwrap();
        let total = neumaier_sum(weights.iter().copied());
        for j in 0..5 {
            let reference = neumaier_sum(models.iter().zip(&weights).map(|(m, w)| w * m.params[j])) / total;
            prop_assert!((avg.params[j] - reference).abs() <= 1e-12 * reference.abs().max(1.0));
        }
    }

    #[test]
    fn averaging_identical_models_is_exact(seed in any::<u64>(), k in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = ModelState {
            params: (0..7).map(|_| rng.random_range(-1.0..1.0)).collect(),
            step_count: 3,
        };
        let avg = average_models(&vec![model.clone(); k]).unwrap();
        // k copies of x summed then divided by k may round; uniform weights of
        // a single model must not.
        if k == 1 {
            prop_assert!(avg.bit_identical(&model));
        } else {
            for (a, b) in avg.params.iter().zip(&model.params) {
                prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs());
            }
        }
    }
}
