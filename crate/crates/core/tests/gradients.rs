//! Finite-difference validation of every analytic gradient, over randomized
//! parameters and samples.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use triagekit::dataset::Sample;
use triagekit::loss::LossFn;
use triagekit::model::{
    finite_difference_check, Activation, DifferentiableModel, LinearRegressionModel, MlpModel,
    MlpOutput, SigmoidModel1D, SoftmaxLinearModel,
};
use triagekit::RngSeed;

const TRIALS: usize = 25;
const TOLERANCE: f64 = 1e-4;

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(42)
}

#[test]
fn sigmoid_gradient_survives_random_draws() {
    let mut rng = rng();
    for _ in 0..TRIALS {
        let model = SigmoidModel1D::new(rng.random_range(-2.0..2.0));
        let x = rng.random_range(-3.0..3.0);
        let y = rng.random_range(0.0..1.0);
        let s = Sample::regression(vec![x], y, vec![y]);
        let err = finite_difference_check(&model, &s, &LossFn::Squared, 1e-5).unwrap();
        assert!(err < TOLERANCE, "relative error {err}");
    }
}

#[test]
fn sigmoid_worked_example_is_tight() {
    let model = SigmoidModel1D::new(0.3);
    let s = Sample::regression(vec![1.7], 0.35, vec![0.35]);
    let err = finite_difference_check(&model, &s, &LossFn::Squared, 1e-5).unwrap();
    assert!(err < 1e-5, "relative error {err}");
}

#[test]
fn linear_gradient_survives_random_draws() {
    let mut rng = rng();
    for _ in 0..TRIALS {
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = LinearRegressionModel::from_parts(w, rng.random_range(-1.0..1.0));
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = rng.random_range(-2.0..2.0);
        let s = Sample::regression(x, y, vec![y]);
        let err = finite_difference_check(&model, &s, &LossFn::Squared, 1e-5).unwrap();
        assert!(err < TOLERANCE, "relative error {err}");
    }
}

#[test]
fn softmax_gradient_survives_random_draws() {
    let mut rng = rng();
    for _ in 0..TRIALS {
        let mut model = SoftmaxLinearModel::zeros(3, 4);
        let params: Vec<f64> = (0..model.num_parameters())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        model.set_parameters(&params).unwrap();
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = rng.random_range(0..4);
        let s = Sample::classification(x, y, vec![y]);
        let err =
            finite_difference_check(&model, &s, &LossFn::cross_entropy_default(), 1e-5).unwrap();
        assert!(err < TOLERANCE, "relative error {err}");
    }
}

#[test]
fn mlp_tanh_gradient_survives_random_draws() {
    let mut rng = rng();
    for trial in 0..TRIALS {
        let mut model = MlpModel::new(
            3,
            &[8, 6],
            Activation::Tanh,
            MlpOutput::Classes { classes: 3 },
            RngSeed(trial as u64),
        )
        .unwrap();
        let params: Vec<f64> = (0..model.num_parameters())
            .map(|_| rng.random_range(-0.8..0.8))
            .collect();
        model.set_parameters(&params).unwrap();
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = rng.random_range(0..3);
        let s = Sample::classification(x, y, vec![y]);
        let err =
            finite_difference_check(&model, &s, &LossFn::cross_entropy_default(), 1e-5).unwrap();
        assert!(err < TOLERANCE, "trial {trial}: relative error {err}");
    }
}

#[test]
fn mlp_relu_gradient_survives_random_draws_away_from_kinks() {
    let mut rng = rng();
    let mut done = 0;
    let mut attempts = 0;
    while done < TRIALS {
        attempts += 1;
        assert!(attempts < TRIALS * 100, "could not find kink-free draws");
        let mut model = MlpModel::new(
            3,
            &[8, 6],
            Activation::Relu,
            MlpOutput::Regression,
            RngSeed(attempts as u64),
        )
        .unwrap();
        let params: Vec<f64> = (0..model.num_parameters())
            .map(|_| rng.random_range(-0.8..0.8))
            .collect();
        model.set_parameters(&params).unwrap();
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        // Central differences straddle ReLU kinks; only check clean points.
        if model.min_abs_hidden_preactivation(&x).unwrap() < 1e-3 {
            continue;
        }
        let y = rng.random_range(-1.0..1.0);
        let s = Sample::regression(x, y, vec![y]);
        let err = finite_difference_check(&model, &s, &LossFn::Squared, 1e-5).unwrap();
        assert!(err < TOLERANCE, "relative error {err}");
        done += 1;
    }
}
