//! Supervised learning under algorithmic triage.
//!
//! A triage policy routes each instance either to a parametric model or to a
//! human expert; the system is charged the model's loss on kept instances
//! and the (averaged) human loss on deferred ones, subject to a budget on
//! the deferred fraction. For a fixed model the optimal policy is a
//! deterministic threshold on the per-instance model-minus-human loss
//! difference, so training interleaves threshold-filtered SGD with policy
//! refreshes. Because the exact policy needs labels, deployment on unseen
//! data goes through a learned feature-only approximator with a
//! validation-calibrated cutoff.
//!
//! Module map:
//! - [`dataset`]: samples, datasets, splits, seeding, the file format
//! - [`loss`]: squared and smoothed cross-entropy losses, human loss
//! - [`model`]: differentiable predictors with analytic gradients
//! - [`triage`]: diff scores, the empirical threshold, selection, the
//!   thresholded system loss
//! - [`train`]: the sequential training loop, approximator fit, calibration
//! - [`policy`]: the feature-only deployment policy
//! - [`baselines`]: full-automation, score-based, confidence-based triage
//! - [`synthdata`]: synthetic regression and classification benchmarks
//! - [`eval`]: system losses, the four-setting comparison, budget sweeps,
//!   diagnostics

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
pub mod policy;
pub mod synthdata;
pub mod train;
pub mod triage;

pub use crate::dataset::{split_dataset, Dataset, RngSeed, Sample, Target, TaskKind};
pub use crate::error::{Error, Result};
pub use crate::loss::{cross_entropy_loss, human_loss, squared_loss, LossFn};
pub use crate::model::{
    finite_difference_check, Activation, DifferentiableModel, LinearRegressionModel, MlpModel,
    MlpOutput, ModelKind, ModelSpec, Prediction, SigmoidModel1D, SoftmaxLinearModel,
};
pub use crate::policy::{ApproxTriagePolicy, Scorer, ScorerSpec};
pub use crate::train::{
    calibrate_deployment_threshold, fit_policy_approximator, run_training_pipeline,
    train_model_step, train_under_triage, FilterWith, OptimizerKind, TrainConfig, TrainTrace,
    TriageRun,
};
pub use crate::triage::{
    decide, diff_scores, empirical_threshold, select_by_diffs, select_training_subset,
    thresholded_system_loss, DiffScore, ExactTriagePolicy, TriageSelection,
};
