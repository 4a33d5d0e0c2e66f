//! Sequential training under triage: the outer loop over (policy, model)
//! pairs, per-minibatch triage-filtered SGD, policy approximator fitting,
//! and validation-based threshold calibration.
//!
//! Minibatches are contiguous chunks in dataset order and the loop uses no
//! randomness, so a run is a pure function of the initial parameters and the
//! configuration.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, RngSeed};
use crate::error::{Error, Result};
use crate::eval::system_loss;
use crate::loss::LossFn;
use crate::model::{sigmoid, DifferentiableModel, ModelKind, ModelSpec};
use crate::policy::{ApproxTriagePolicy, ScorerSpec};
use crate::triage::{decide, diff_scores, select_by_diffs, thresholded_system_loss, ExactTriagePolicy};

/// Which model scores the minibatch when deciding the training subset.
///
/// `CurrentIterate` re-scores each minibatch with the parameters as they
/// evolve inside the step; `PreviousStep` freezes the scoring model at the
/// parameters the step started from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterWith {
    PreviousStep,
    #[default]
    CurrentIterate,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn adam_default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment state for the adaptive optimizer; empty for plain SGD.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        let len = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam { .. } => n_params,
        };
        OptimizerState {
            kind,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn apply(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                self.t += 1;
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                for i in 0..params.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
    }
}

/// Configuration for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Maximum level of triage b in [0, 1].
    pub budget: f64,
    /// Outer steps T: how many times the (policy, model) pair is refreshed.
    pub outer_steps: usize,
    /// Epochs N for the policy approximator fit.
    pub epochs: usize,
    /// Minibatch size B.
    pub batch_size: usize,
    /// Constant learning rate.
    pub learning_rate: f64,
    /// Early-stopping patience on the validation loss; 0 disables.
    pub patience: usize,
    pub seed: RngSeed,
    pub filter_with: FilterWith,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            budget: 1.0,
            outer_steps: 40,
            epochs: 40,
            batch_size: 32,
            learning_rate: 0.1,
            patience: 0,
            seed: RngSeed(0),
            filter_with: FilterWith::default(),
            optimizer: OptimizerKind::default(),
        }
    }
}

impl TrainConfig {
    pub fn new(budget: f64, seed: RngSeed) -> Self {
        TrainConfig {
            budget,
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.budget) {
            return Err(Error::InvalidConfig(format!(
                "budget must lie in [0, 1], got {}",
                self.budget
            )));
        }
        if self.outer_steps == 0 {
            return Err(Error::InvalidConfig("outer_steps must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Everything recorded during a run: the per-outer-step training loss, the
/// validation trace when present, the approximator's per-epoch loss, and
/// any degeneracy warnings.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub outer_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub approx_epoch_losses: Vec<f64>,
    pub final_parameters: Vec<f64>,
    pub warnings: Vec<String>,
    pub stopped_early_at: Option<usize>,
    pub skipped_minibatches: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub minibatches: usize,
    pub skipped: usize,
}

/// One outer step: a single pass over the minibatches, filtering each with
/// the triage selection rule and applying one update per minibatch averaged
/// over the kept samples only. Minibatches whose kept set is empty are
/// skipped.
pub fn train_model_step<M: DifferentiableModel + Clone>(
    model: &mut M,
    data: &Dataset,
    loss: &LossFn,
    config: &TrainConfig,
    opt: &mut OptimizerState,
) -> Result<StepStats> {
    config.validate()?;
    let snapshot = match config.filter_with {
        FilterWith::PreviousStep => Some(model.clone()),
        FilterWith::CurrentIterate => None,
    };
    let mut stats = StepStats::default();
    let samples = data.samples();
    let mut start = 0;
    while start < samples.len() {
        let end = (start + config.batch_size).min(samples.len());
        let batch = &samples[start..end];
        start = end;
        stats.minibatches += 1;

        let diffs: Vec<f64> = match &snapshot {
            Some(frozen) => diff_scores(frozen, batch, loss)?,
            None => diff_scores(&*model, batch, loss)?,
        }
        .into_iter()
        .map(|d| d.diff)
        .collect();
        let selection = select_by_diffs(&diffs, config.budget)?;
        if selection.kept.is_empty() {
            stats.skipped += 1;
            continue;
        }

        let mut grad = vec![0.0; model.num_parameters()];
        for &i in &selection.kept {
            let g = model.loss_gradient(&batch[i], loss)?;
            for (acc, v) in grad.iter_mut().zip(&g) {
                *acc += v;
            }
        }
        let scale = 1.0 / selection.kept.len() as f64;
        for v in &mut grad {
            *v *= scale;
        }
        let mut params = model.parameters();
        opt.apply(&mut params, &grad, config.learning_rate);
        model.set_parameters(&params)?;
    }
    Ok(stats)
}

/// Runs `outer_steps` training steps from the model's current parameters,
/// recording the training-set system loss under the model's own optimal
/// policy after each step. When a validation set and a nonzero patience are
/// given, stops once the validation loss has not improved for `patience`
/// consecutive steps.
pub fn train_under_triage<M: DifferentiableModel + Clone>(
    model: &mut M,
    data: &Dataset,
    val: Option<&Dataset>,
    loss: &LossFn,
    config: &TrainConfig,
) -> Result<TrainTrace> {
    config.validate()?;
    let mut trace = TrainTrace::default();
    let mut opt = OptimizerState::new(config.optimizer, model.num_parameters());
    let mut best_val = f64::INFINITY;
    let mut since_best = 0usize;

    for step in 0..config.outer_steps {
        let stats = train_model_step(model, data, loss, config, &mut opt)?;
        trace.skipped_minibatches += stats.skipped;
        trace
            .outer_losses
            .push(thresholded_system_loss(model, data, config.budget, loss)?);
        if let Some(val) = val {
            let val_loss = thresholded_system_loss(model, val, config.budget, loss)?;
            trace.val_losses.push(val_loss);
            if config.patience > 0 {
                if val_loss < best_val {
                    best_val = val_loss;
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= config.patience {
                        trace.stopped_early_at = Some(step + 1);
                        break;
                    }
                }
            }
        }
    }
    trace.final_parameters = model.parameters();
    Ok(trace)
}

/// Binary cross-entropy of a logistic score against a 0/1 target, computed
/// from the logit for numerical stability.
fn logistic_bce(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p()
}

/// Fits the policy approximator: computes the exact policy's decisions on
/// the training data as binary targets, then minimizes binary cross-entropy
/// of the logistic scorer against them by minibatch SGD for `epochs` passes.
///
/// Returns the fitted policy (deployment threshold still at its 0.5 default
/// until calibrated), the per-epoch mean approximator loss, and any
/// warnings.
pub fn fit_policy_approximator<M: DifferentiableModel>(
    model: &M,
    data: &Dataset,
    scorer_spec: &ScorerSpec,
    loss: &LossFn,
    config: &TrainConfig,
) -> Result<(ApproxTriagePolicy, Vec<f64>, Vec<String>)> {
    config.validate()?;
    let mut warnings = Vec::new();

    let diffs: Vec<f64> = diff_scores(model, data.samples(), loss)?
        .into_iter()
        .map(|d| d.diff)
        .collect();
    let exact = ExactTriagePolicy::fit(&diffs, config.budget)?;
    let targets: Vec<f64> = diffs
        .iter()
        .map(|&d| if decide(&exact, d) { 1.0 } else { 0.0 })
        .collect();
    if targets.iter().all(|&t| t == targets[0]) {
        warnings.push(format!(
            "policy approximator targets are all {}; scorer will be fit to a constant",
            targets[0]
        ));
    }

    let mut scorer = scorer_spec.build(data.dim(), config.seed)?;
    let mut opt = OptimizerState::new(config.optimizer, scorer.parameters().len());
    let samples = data.samples();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        let mut epoch_loss = 0.0;
        let mut start = 0;
        while start < samples.len() {
            let end = (start + config.batch_size).min(samples.len());
            let mut grad = vec![0.0; scorer.parameters().len()];
            for i in start..end {
                let x = &samples[i].x;
                let z = scorer.logit(x)?;
                epoch_loss += logistic_bce(z, targets[i]);
                let residual = sigmoid(z) - targets[i];
                let gz = scorer.logit_gradient(x)?;
                for (acc, v) in grad.iter_mut().zip(&gz) {
                    *acc += residual * v;
                }
            }
            let scale = 1.0 / (end - start) as f64;
            for v in &mut grad {
                *v *= scale;
            }
            let mut params = scorer.parameters();
            opt.apply(&mut params, &grad, config.learning_rate);
            scorer.set_parameters(&params)?;
            start = end;
        }
        epoch_losses.push(epoch_loss / samples.len() as f64);
    }

    Ok((ApproxTriagePolicy::new(scorer), epoch_losses, warnings))
}

/// Calibrates the deployment threshold on validation data.
///
/// Scans every distinct scorer output plus the boundary candidates 0 and 1,
/// keeps candidates whose deferral fraction is at most `b + 1/|val|`, and
/// returns the one minimizing the validation system loss. Ties prefer the
/// larger threshold (defer less).
pub fn calibrate_deployment_threshold<M: DifferentiableModel>(
    policy: &ApproxTriagePolicy,
    model: &M,
    val: &Dataset,
    budget: f64,
    loss: &LossFn,
) -> Result<f64> {
    if val.is_empty() {
        return Err(Error::EmptyInput("validation set"));
    }
    let n = val.len() as f64;
    let scores: Vec<f64> = val
        .samples()
        .iter()
        .map(|s| policy.score(&s.x))
        .collect::<Result<Vec<_>>>()?;

    let mut candidates = scores.clone();
    candidates.push(0.0);
    candidates.push(1.0);
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    candidates.dedup();

    let mut best: Option<(f64, f64)> = None; // (loss, threshold)
    for &cand in &candidates {
        let decisions: Vec<bool> = scores.iter().map(|&s| s >= cand).collect();
        let deferred = decisions.iter().filter(|&&d| d).count() as f64;
        if deferred / n > budget + 1.0 / n {
            continue;
        }
        let cand_loss = system_loss(&decisions, model, val, loss)?;
        best = match best {
            None => Some((cand_loss, cand)),
            Some((bl, bt)) => {
                if cand_loss < bl || (cand_loss == bl && cand > bt) {
                    Some((cand_loss, cand))
                } else {
                    Some((bl, bt))
                }
            }
        };
    }
    let (_, threshold) = best.expect("threshold 1.0 is always feasible");
    Ok(threshold)
}

/// Output of the full pipeline: trained model, calibrated policy, trace.
#[derive(Debug, Clone)]
pub struct TriageRun {
    pub model: ModelKind,
    pub policy: ApproxTriagePolicy,
    pub trace: TrainTrace,
}

/// End-to-end convenience: initialize, train under triage, fit the policy
/// approximator, and calibrate its threshold on validation data when given.
pub fn run_training_pipeline(
    model_spec: &ModelSpec,
    scorer_spec: &ScorerSpec,
    train: &Dataset,
    val: Option<&Dataset>,
    loss: &LossFn,
    config: &TrainConfig,
) -> Result<TriageRun> {
    let mut model = model_spec.build(config.seed)?;
    let mut trace = train_under_triage(&mut model, train, val, loss, config)?;
    let (mut policy, epoch_losses, warnings) =
        fit_policy_approximator(&model, train, scorer_spec, loss, config)?;
    trace.approx_epoch_losses = epoch_losses;
    trace.warnings.extend(warnings);
    if let Some(val) = val {
        policy.threshold =
            calibrate_deployment_threshold(&policy, &model, val, config.budget, loss)?;
    } else {
        trace
            .warnings
            .push("no validation set; deployment threshold left at 0.5".into());
    }
    Ok(TriageRun {
        model,
        policy,
        trace,
    })
}
