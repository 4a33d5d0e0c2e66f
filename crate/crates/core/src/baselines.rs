//! Comparison strategies: full-automation triage, score-based triage, and
//! confidence-based triage.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::loss::LossFn;
use crate::model::{DifferentiableModel, ModelKind, ModelSpec, Prediction};
use crate::policy::ScorerSpec;
use crate::train::{
    calibrate_deployment_threshold, fit_policy_approximator, train_under_triage, OptimizerState,
    TrainConfig, TriageRun,
};
use crate::triage::budget_count;

/// Deployment strategies compared in the budget sweep. `Ours` is the
/// sequential triage-trained method; the rest are the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ours,
    FullAutomation,
    Score,
    Confidence,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Ours,
        Method::FullAutomation,
        Method::Score,
        Method::Confidence,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::FullAutomation => "full_automation",
            Method::Score => "score",
            Method::Confidence => "confidence",
        }
    }

    pub fn parse(name: &str) -> Result<Method> {
        match name {
            "ours" => Ok(Method::Ours),
            "full_automation" => Ok(Method::FullAutomation),
            "score" => Ok(Method::Score),
            "confidence" => Ok(Method::Confidence),
            other => Err(Error::InvalidConfig(format!(
                "unknown method {other:?}; valid methods: ours, full_automation, score, confidence"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Full-automation triage: the model trains on every sample (no filtering),
/// then the policy approximator and its calibrated threshold are produced
/// exactly as for the triage-trained method, at the requested budget.
pub fn train_full_automation(
    model_spec: &ModelSpec,
    scorer_spec: &ScorerSpec,
    train: &Dataset,
    val: Option<&Dataset>,
    loss: &LossFn,
    config: &TrainConfig,
) -> Result<TriageRun> {
    let mut model = model_spec.build(config.seed)?;
    let vanilla = TrainConfig {
        budget: 0.0,
        ..config.clone()
    };
    let mut trace = train_under_triage(&mut model, train, val, loss, &vanilla)?;
    let (mut policy, epoch_losses, warnings) =
        fit_policy_approximator(&model, train, scorer_spec, loss, config)?;
    trace.approx_epoch_losses = epoch_losses;
    trace.warnings.extend(warnings);
    if let Some(val) = val {
        policy.threshold =
            calibrate_deployment_threshold(&policy, &model, val, config.budget, loss)?;
    }
    Ok(TriageRun {
        model,
        policy,
        trace,
    })
}

fn confidences<M: DifferentiableModel>(model: &M, xs: &[&[f64]]) -> Result<Vec<f64>> {
    xs.iter()
        .map(|x| match model.predict(x)? {
            p @ Prediction::Probabilities(_) => p.confidence(),
            Prediction::Real(_) => Err(Error::UnsupportedTask(
                "score/confidence triage needs a classification model".into(),
            )),
        })
        .collect()
}

/// Score-based test selection: sort ascending by the model's top class
/// probability and defer the first `floor(b * n)` samples. This strategy
/// ignores the human loss entirely, so it always defers exactly that many.
pub fn score_based_rank<M: DifferentiableModel>(
    model: &M,
    xs: &[&[f64]],
    budget: f64,
) -> Result<Vec<usize>> {
    let conf = confidences(model, xs)?;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| {
        conf[a]
            .partial_cmp(&conf[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut deferred: Vec<usize> = order[..budget_count(budget, xs.len())].to_vec();
    deferred.sort_unstable();
    Ok(deferred)
}

/// Pooled probability that a human expert vote matches the true label,
/// estimated over every vote in the dataset.
pub fn global_human_accuracy(data: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for s in data.samples() {
        let y = s.y.as_label()?;
        for v in &s.h {
            if v.as_label()? == y {
                correct += 1;
            }
        }
        total += s.h.len();
    }
    Ok(correct as f64 / total as f64)
}

#[derive(Debug, Clone)]
pub struct ConfidenceTrainOutcome {
    pub model: ModelKind,
    pub human_accuracy: f64,
    pub fallback_batches: usize,
    pub warnings: Vec<String>,
}

/// Confidence-based training. Each minibatch keeps the
/// `min(floor(b * batch), n_c)` samples with the lowest value of
/// `P(h=y) - max_y' P(m(x)=y')`, where `n_c` counts samples whose pooled
/// human accuracy exceeds the model confidence. A keep count of zero would
/// starve the optimizer, so those batches fall back to the full batch and
/// are reported.
pub fn confidence_based_train(
    model_spec: &ModelSpec,
    data: &Dataset,
    loss: &LossFn,
    config: &TrainConfig,
) -> Result<ConfidenceTrainOutcome> {
    config.validate()?;
    let human_accuracy = global_human_accuracy(data)?;
    let mut model = model_spec.build(config.seed)?;
    let mut opt = OptimizerState::new(config.optimizer, model.num_parameters());
    let mut fallback_batches = 0usize;
    let samples = data.samples();

    for _ in 0..config.outer_steps {
        let mut start = 0;
        while start < samples.len() {
            let end = (start + config.batch_size).min(samples.len());
            let batch = &samples[start..end];
            start = end;

            let xs: Vec<&[f64]> = batch.iter().map(|s| s.x.as_slice()).collect();
            let conf = confidences(&model, &xs)?;
            let n_c = conf.iter().filter(|&&c| human_accuracy > c).count();
            let keep = budget_count(config.budget, batch.len()).min(n_c);

            let kept: Vec<usize> = if keep == 0 {
                fallback_batches += 1;
                (0..batch.len()).collect()
            } else {
                let mut order: Vec<usize> = (0..batch.len()).collect();
                order.sort_by(|&a, &b| {
                    let va = human_accuracy - conf[a];
                    let vb = human_accuracy - conf[b];
                    va.partial_cmp(&vb)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.cmp(&b))
                });
                order[..keep].to_vec()
            };

            let mut grad = vec![0.0; model.num_parameters()];
            for &i in &kept {
                let g = model.loss_gradient(&batch[i], loss)?;
                for (acc, v) in grad.iter_mut().zip(&g) {
                    *acc += v;
                }
            }
            let scale = 1.0 / kept.len() as f64;
            for v in &mut grad {
                *v *= scale;
            }
            let mut params = model.parameters();
            opt.apply(&mut params, &grad, config.learning_rate);
            model.set_parameters(&params)?;
        }
    }

    let mut warnings = Vec::new();
    if fallback_batches > 0 {
        warnings.push(format!(
            "confidence-based training fell back to the full batch {fallback_batches} times \
             (keep count was zero)"
        ));
    }
    Ok(ConfidenceTrainOutcome {
        model,
        human_accuracy,
        fallback_batches,
        warnings,
    })
}

/// Confidence-based test selection: sort ascending by model confidence and
/// defer the first `min(floor(b * n), n_c)` samples, where `n_c` counts test
/// samples whose pooled human accuracy exceeds the model confidence.
pub fn confidence_based_test_selection<M: DifferentiableModel>(
    model: &M,
    xs: &[&[f64]],
    budget: f64,
    human_accuracy: f64,
) -> Result<Vec<usize>> {
    let conf = confidences(model, xs)?;
    let n_c = conf.iter().filter(|&&c| human_accuracy > c).count();
    let count = budget_count(budget, xs.len()).min(n_c);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| {
        conf[a]
            .partial_cmp(&conf[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut deferred: Vec<usize> = order[..count].to_vec();
    deferred.sort_unstable();
    Ok(deferred)
}
