//! System-loss estimation, the four-setting synthetic comparison, budget
//! sweeps across deployment strategies, and the gradient and loss-ratio
//! diagnostics.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    confidence_based_test_selection, confidence_based_train, score_based_rank,
    train_full_automation, Method,
};
use crate::dataset::{stream_tags, Dataset, RngSeed, Target, TaskKind};
use crate::error::{Error, Result};
use crate::loss::{human_loss, squared_loss, LossFn};
use crate::model::{DifferentiableModel, ModelSpec};
use crate::policy::{ApproxTriagePolicy, ScorerSpec};
use crate::synthdata::{gen_regression, RegressionSpec};
use crate::train::{run_training_pipeline, train_under_triage, TrainConfig};
use crate::triage::{budget_count, decide, diff_scores, ExactTriagePolicy};

/// Empirical joint system loss: the model is charged on kept samples, the
/// (averaged) human loss on deferred ones.
pub fn system_loss<M: DifferentiableModel>(
    decisions: &[bool],
    model: &M,
    data: &Dataset,
    loss: &LossFn,
) -> Result<f64> {
    if decisions.len() != data.len() {
        return Err(Error::LengthMismatch(format!(
            "{} decisions for {} samples",
            decisions.len(),
            data.len()
        )));
    }
    let mut total = 0.0;
    for (sample, &defer) in data.samples().iter().zip(decisions) {
        total += if defer {
            human_loss(sample, loss)?
        } else {
            model.sample_loss(sample, loss)?
        };
    }
    Ok(total / data.len() as f64)
}

/// The point-estimate variant of the system loss: each deferred sample's
/// human term is replaced by the loss of the mean human prediction. Biased
/// downward whenever the human predictions disagree. Regression with the
/// squared loss only.
pub fn biased_point_estimate_loss<M: DifferentiableModel>(
    decisions: &[bool],
    model: &M,
    data: &Dataset,
) -> Result<f64> {
    if data.task_kind() != TaskKind::Regression {
        return Err(Error::UnsupportedTask(
            "the point-estimate loss is defined for regression only".into(),
        ));
    }
    if decisions.len() != data.len() {
        return Err(Error::LengthMismatch(format!(
            "{} decisions for {} samples",
            decisions.len(),
            data.len()
        )));
    }
    let loss = LossFn::Squared;
    let mut total = 0.0;
    for (sample, &defer) in data.samples().iter().zip(decisions) {
        total += if defer {
            let mean_h = sample
                .h
                .iter()
                .map(|v| v.as_real())
                .sum::<Result<f64>>()?
                / sample.h.len() as f64;
            squared_loss(mean_h, sample.y.as_real()?)
        } else {
            model.sample_loss(sample, &loss)?
        };
    }
    Ok(total / data.len() as f64)
}

fn mean_gradient_norm<M: DifferentiableModel>(
    model: &M,
    data: &Dataset,
    loss: &LossFn,
    indices: &[usize],
) -> Result<f64> {
    if indices.is_empty() {
        return Ok(0.0);
    }
    let mut acc = vec![0.0; model.num_parameters()];
    for &i in indices {
        let g = model.loss_gradient(&data.samples()[i], loss)?;
        for (a, v) in acc.iter_mut().zip(&g) {
            *a += v;
        }
    }
    let scale = 1.0 / indices.len() as f64;
    Ok(acc.iter().map(|v| (v * scale) * (v * scale)).sum::<f64>().sqrt())
}

fn policy_partition<M: DifferentiableModel>(
    model: &M,
    data: &Dataset,
    budget: f64,
    loss: &LossFn,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let diffs: Vec<f64> = diff_scores(model, data.samples(), loss)?
        .into_iter()
        .map(|d| d.diff)
        .collect();
    let policy = ExactTriagePolicy::fit(&diffs, budget)?;
    let mut kept = Vec::new();
    let mut deferred = Vec::new();
    for (i, &d) in diffs.iter().enumerate() {
        if decide(&policy, d) {
            deferred.push(i);
        } else {
            kept.push(i);
        }
    }
    Ok((kept, deferred))
}

/// Norm of the mean loss gradient over the samples the optimal threshold
/// policy defers. Zero for an empty deferred set. A nonzero value at a
/// full-automation optimum certifies that triage training can improve.
pub fn deferred_gradient_norm<M: DifferentiableModel>(
    model: &M,
    data: &Dataset,
    budget: f64,
    loss: &LossFn,
) -> Result<f64> {
    let (_, deferred) = policy_partition(model, data, budget, loss)?;
    mean_gradient_norm(model, data, loss, &deferred)
}

/// Norm of the mean loss gradient over the samples the policy keeps; small
/// at a triage-trained optimum (first-order stationarity of the thresholded
/// loss).
pub fn kept_gradient_norm<M: DifferentiableModel>(
    model: &M,
    data: &Dataset,
    budget: f64,
    loss: &LossFn,
) -> Result<f64> {
    let (kept, _) = policy_partition(model, data, budget, loss)?;
    mean_gradient_norm(model, data, loss, &kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SettingId {
    S1FullAutoNoTriage,
    S2FullAutoOptimalTriage,
    S3TriageModelMismatchedPolicy,
    S4TriageModelOptimalTriage,
}

impl SettingId {
    pub const ALL: [SettingId; 4] = [
        SettingId::S1FullAutoNoTriage,
        SettingId::S2FullAutoOptimalTriage,
        SettingId::S3TriageModelMismatchedPolicy,
        SettingId::S4TriageModelOptimalTriage,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            SettingId::S1FullAutoNoTriage => "S1_full_auto_no_triage",
            SettingId::S2FullAutoOptimalTriage => "S2_full_auto_optimal_triage",
            SettingId::S3TriageModelMismatchedPolicy => "S3_triage_model_mismatched_policy",
            SettingId::S4TriageModelOptimalTriage => "S4_triage_model_optimal_triage",
        }
    }
}

/// One row of the per-instance diagnostic dump: enough to reproduce the
/// loss-versus-loss scatter panels for both trained models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub index: usize,
    pub x: Vec<f64>,
    pub y: Target,
    pub human_loss: f64,
    pub full_auto_model_loss: f64,
    pub triage_model_loss: f64,
    /// Decision of the optimal policy for the full-automation model.
    pub full_auto_policy_decision: bool,
    /// Decision of the optimal policy for the triage-trained model.
    pub triage_policy_decision: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FourSettingsConfig {
    pub spec: RegressionSpec,
    pub model: ModelSpec,
    /// Training hyperparameters; `budget` is ignored because the four
    /// settings fix it to 0 (full automation) and 1 (unconstrained triage).
    pub train: TrainConfig,
}

impl Default for FourSettingsConfig {
    fn default() -> Self {
        // Full-batch steps keep every update an exact gradient step, which is
        // what the monotone-improvement guarantee assumes; the step count is
        // sized so the unconstrained triage run settles even when the kept
        // set starts nearly empty.
        let spec = RegressionSpec::default();
        let train = TrainConfig {
            budget: 1.0,
            outer_steps: 20_000,
            epochs: 50,
            batch_size: spec.n,
            learning_rate: 0.25,
            patience: 0,
            seed: RngSeed(0),
            ..TrainConfig::default()
        };
        FourSettingsConfig {
            spec,
            model: ModelSpec::Sigmoid1d,
            train,
        }
    }
}

impl FourSettingsConfig {
    pub fn with_seed(mut self, seed: RngSeed) -> Self {
        self.spec.seed = seed;
        self.train.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FourSettingsReport {
    /// Losses of settings 1-4, indexed in order.
    pub losses: [f64; 4],
    pub full_auto_parameters: Vec<f64>,
    pub triage_parameters: Vec<f64>,
    pub per_instance: Vec<InstanceRecord>,
    /// Fraction of training samples the triage-trained model's own policy
    /// defers.
    pub deferred_fraction: f64,
    /// Mean-gradient norm over the deferred set at the full-automation
    /// optimum (positive means triage training can improve).
    pub full_auto_deferred_gradient_norm: f64,
    /// Mean-gradient norm over the kept set at the triage-trained optimum
    /// (small means first-order stationarity).
    pub triage_kept_gradient_norm: f64,
    pub full_auto_trace: Vec<f64>,
    pub triage_trace: Vec<f64>,
}

impl FourSettingsReport {
    pub fn loss(&self, setting: SettingId) -> f64 {
        match setting {
            SettingId::S1FullAutoNoTriage => self.losses[0],
            SettingId::S2FullAutoOptimalTriage => self.losses[1],
            SettingId::S3TriageModelMismatchedPolicy => self.losses[2],
            SettingId::S4TriageModelOptimalTriage => self.losses[3],
        }
    }

    pub fn strict_ordering_holds(&self) -> bool {
        let [s1, s2, s3, s4] = self.losses;
        s4 < s2 && s2 < s3 && s3 < s1
    }
}

/// Trains the full-automation and unconstrained-triage models on the same
/// synthetic draw and evaluates the four deployment settings on the training
/// samples: the full-automation model bare and under its optimal policy, and
/// the triage-trained model under the mismatched and its own optimal policy.
pub fn run_four_settings(config: &FourSettingsConfig) -> Result<FourSettingsReport> {
    let loss = LossFn::Squared;
    let data = gen_regression(&config.spec)?;

    let mut full_auto = config.model.build(config.train.seed)?;
    let cfg0 = TrainConfig {
        budget: 0.0,
        ..config.train.clone()
    };
    let trace0 = train_under_triage(&mut full_auto, &data, None, &loss, &cfg0)?;

    let mut triaged = config.model.build(config.train.seed)?;
    let cfg1 = TrainConfig {
        budget: 1.0,
        ..config.train.clone()
    };
    let trace1 = train_under_triage(&mut triaged, &data, None, &loss, &cfg1)?;

    let n = data.len();
    let diffs0: Vec<f64> = diff_scores(&full_auto, data.samples(), &loss)?
        .into_iter()
        .map(|d| d.diff)
        .collect();
    let policy0 = ExactTriagePolicy::fit(&diffs0, 1.0)?;
    let decisions0: Vec<bool> = diffs0.iter().map(|&d| decide(&policy0, d)).collect();

    let diffs1: Vec<f64> = diff_scores(&triaged, data.samples(), &loss)?
        .into_iter()
        .map(|d| d.diff)
        .collect();
    let policy1 = ExactTriagePolicy::fit(&diffs1, 1.0)?;
    let decisions1: Vec<bool> = diffs1.iter().map(|&d| decide(&policy1, d)).collect();

    let s1 = system_loss(&vec![false; n], &full_auto, &data, &loss)?;
    let s2 = system_loss(&decisions0, &full_auto, &data, &loss)?;
    let s3 = system_loss(&decisions0, &triaged, &data, &loss)?;
    let s4 = system_loss(&decisions1, &triaged, &data, &loss)?;

    let per_instance = data
        .samples()
        .iter()
        .enumerate()
        .map(|(index, sample)| {
            Ok(InstanceRecord {
                index,
                x: sample.x.clone(),
                y: sample.y,
                human_loss: human_loss(sample, &loss)?,
                full_auto_model_loss: full_auto.sample_loss(sample, &loss)?,
                triage_model_loss: triaged.sample_loss(sample, &loss)?,
                full_auto_policy_decision: decisions0[index],
                triage_policy_decision: decisions1[index],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(FourSettingsReport {
        losses: [s1, s2, s3, s4],
        full_auto_parameters: full_auto.parameters(),
        triage_parameters: triaged.parameters(),
        per_instance,
        deferred_fraction: decisions1.iter().filter(|&&d| d).count() as f64 / n as f64,
        full_auto_deferred_gradient_norm: deferred_gradient_norm(&full_auto, &data, 1.0, &loss)?,
        triage_kept_gradient_norm: kept_gradient_norm(&triaged, &data, 1.0, &loss)?,
        full_auto_trace: trace0.outer_losses,
        triage_trace: trace1.outer_losses,
    })
}

/// Train/validation/test partition used by the budget sweep.
#[derive(Debug, Clone)]
pub struct DataSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// One cell of the budget sweep result table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub method: Method,
    pub budget: f64,
    pub seed: u64,
    /// Misclassification error on test; absent for regression tasks.
    pub zero_one_error: Option<f64>,
    pub system_loss: f64,
    pub deferred_fraction: f64,
}

/// Threshold deployment with a hard budget: defer the samples scoring at or
/// above the calibrated cutoff, and when more than `floor(b * n)` qualify,
/// keep the highest-scoring ones.
pub fn deploy_with_budget(
    policy: &ApproxTriagePolicy,
    test: &Dataset,
    budget: f64,
) -> Result<Vec<bool>> {
    let scores: Vec<f64> = test
        .samples()
        .iter()
        .map(|s| policy.score(&s.x))
        .collect::<Result<Vec<_>>>()?;
    let mut qualifying: Vec<usize> = (0..test.len())
        .filter(|&i| scores[i] >= policy.threshold)
        .collect();
    let cap = budget_count(budget, test.len());
    if qualifying.len() > cap {
        qualifying.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        qualifying.truncate(cap);
    }
    let mut decisions = vec![false; test.len()];
    for i in qualifying {
        decisions[i] = true;
    }
    Ok(decisions)
}

/// Misclassification error with seeded human draws; the rng stream keeps
/// draws reproducible regardless of which other evaluations ran first.
pub fn zero_one_error_with_draws<M: DifferentiableModel>(
    model: &M,
    test: &Dataset,
    decisions: &[bool],
    seed: RngSeed,
    stream: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    rng.set_stream(stream);
    zero_one_error(model, test, decisions, &mut rng)
}

/// Misclassification error on test data: kept samples are predicted by the
/// model's argmax class; deferred samples by one human vote drawn uniformly
/// from the recorded committee (that is, from the empirical vote
/// distribution), using the given rng.
fn zero_one_error<M: DifferentiableModel>(
    model: &M,
    test: &Dataset,
    decisions: &[bool],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut errors = 0usize;
    for (sample, &defer) in test.samples().iter().zip(decisions) {
        let y = sample.y.as_label()?;
        let predicted = if defer {
            sample.h[rng.random_range(0..sample.h.len())].as_label()?
        } else {
            model.predict(&sample.x)?.argmax_class()?
        };
        if predicted != y {
            errors += 1;
        }
    }
    Ok(errors as f64 / test.len() as f64)
}

#[allow(clippy::too_many_arguments)]
fn sweep_cell(
    method: Method,
    budget: f64,
    splits: &DataSplits,
    model_spec: &ModelSpec,
    scorer_spec: &ScorerSpec,
    base: &TrainConfig,
    loss: &LossFn,
    draw_stream: u64,
) -> Result<SweepCell> {
    let config = TrainConfig {
        budget,
        ..base.clone()
    };
    let (model, decisions) = match method {
        Method::Ours => {
            let run = run_training_pipeline(
                model_spec,
                scorer_spec,
                &splits.train,
                Some(&splits.val),
                loss,
                &config,
            )?;
            let decisions = deploy_with_budget(&run.policy, &splits.test, budget)?;
            (run.model, decisions)
        }
        Method::FullAutomation => {
            let run = train_full_automation(
                model_spec,
                scorer_spec,
                &splits.train,
                Some(&splits.val),
                loss,
                &config,
            )?;
            let decisions = deploy_with_budget(&run.policy, &splits.test, budget)?;
            (run.model, decisions)
        }
        Method::Score => {
            let vanilla = TrainConfig {
                budget: 0.0,
                ..config.clone()
            };
            let mut model = model_spec.build(config.seed)?;
            train_under_triage(&mut model, &splits.train, Some(&splits.val), loss, &vanilla)?;
            let xs: Vec<&[f64]> = splits.test.samples().iter().map(|s| s.x.as_slice()).collect();
            let deferred = score_based_rank(&model, &xs, budget)?;
            let mut decisions = vec![false; splits.test.len()];
            for i in deferred {
                decisions[i] = true;
            }
            (model, decisions)
        }
        Method::Confidence => {
            let outcome = confidence_based_train(model_spec, &splits.train, loss, &config)?;
            let xs: Vec<&[f64]> = splits.test.samples().iter().map(|s| s.x.as_slice()).collect();
            let deferred = confidence_based_test_selection(
                &outcome.model,
                &xs,
                budget,
                outcome.human_accuracy,
            )?;
            let mut decisions = vec![false; splits.test.len()];
            for i in deferred {
                decisions[i] = true;
            }
            (outcome.model, decisions)
        }
    };

    let test_loss = system_loss(&decisions, &model, &splits.test, loss)?;
    let zero_one = if splits.test.task_kind() == TaskKind::Classification {
        let mut rng = ChaCha8Rng::seed_from_u64(base.seed.0);
        rng.set_stream(draw_stream);
        Some(zero_one_error(&model, &splits.test, &decisions, &mut rng)?)
    } else {
        None
    };
    let deferred_fraction =
        decisions.iter().filter(|&&d| d).count() as f64 / splits.test.len() as f64;
    Ok(SweepCell {
        method,
        budget,
        seed: base.seed.0,
        zero_one_error: zero_one,
        system_loss: test_loss,
        deferred_fraction,
    })
}

/// Runs every (method, budget) cell on the given splits. Cells are
/// independent; with `jobs > 1` they run on that many threads, and the
/// result order is (method, budget) regardless of scheduling.
#[allow(clippy::too_many_arguments)]
pub fn budget_sweep(
    splits: &DataSplits,
    model_spec: &ModelSpec,
    scorer_spec: &ScorerSpec,
    config: &TrainConfig,
    budgets: &[f64],
    methods: &[Method],
    loss: &LossFn,
    jobs: usize,
) -> Result<Vec<SweepCell>> {
    if budgets.iter().any(|b| !(0.0..=1.0).contains(b)) {
        return Err(Error::InvalidConfig("budgets must lie in [0, 1]".into()));
    }
    let cells: Vec<(usize, Method, f64)> = methods
        .iter()
        .enumerate()
        .flat_map(|(mi, &m)| {
            budgets
                .iter()
                .enumerate()
                .map(move |(bi, &b)| (mi * 1024 + bi, m, b))
        })
        .collect();

    let worker = |(cell_id, method, budget): (usize, Method, f64)| -> Result<SweepCell> {
        // Human draws for the error column get an rng stream derived from the
        // cell's grid position, so results do not depend on scheduling.
        sweep_cell(
            method,
            budget,
            splits,
            model_spec,
            scorer_spec,
            config,
            loss,
            stream_tags::TEST_HUMAN_DRAW + 1 + cell_id as u64,
        )
    };

    if jobs <= 1 || cells.len() <= 1 {
        return cells.into_iter().map(worker).collect();
    }

    let jobs = jobs.min(cells.len());
    let mut results: Vec<Option<Result<SweepCell>>> = Vec::new();
    results.resize_with(cells.len(), || None);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for worker_id in 0..jobs {
            let cells = &cells;
            let worker = &worker;
            handles.push(scope.spawn(move || {
                let mut out = Vec::new();
                let mut i = worker_id;
                while i < cells.len() {
                    out.push((i, worker(cells[i])));
                    i += jobs;
                }
                out
            }));
        }
        for handle in handles {
            for (i, cell) in handle.join().expect("sweep worker panicked") {
                results[i] = Some(cell);
            }
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("every sweep cell computed"))
        .collect()
}

/// Summary of the model-to-human loss ratio within one decision group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupRatioSummary {
    pub count: usize,
    /// Samples whose human loss was below 1e-12; their ratio is reported in
    /// this bucket instead of the quantiles.
    pub infinite_count: usize,
    pub q25: Option<f64>,
    pub median: Option<f64>,
    pub q75: Option<f64>,
}

/// Loss-ratio report split by triage decision; a group with no samples is
/// marked absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioReport {
    pub kept: Option<GroupRatioSummary>,
    pub deferred: Option<GroupRatioSummary>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let pos = q * (m - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn summarize_group(ratios: &[f64], infinite: usize) -> Option<GroupRatioSummary> {
    let count = ratios.len() + infinite;
    if count == 0 {
        return None;
    }
    let mut finite = ratios.to_vec();
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let (q25, median, q75) = if finite.is_empty() {
        (None, None, None)
    } else {
        (
            Some(quantile(&finite, 0.25)),
            Some(quantile(&finite, 0.5)),
            Some(quantile(&finite, 0.75)),
        )
    };
    Some(GroupRatioSummary {
        count,
        infinite_count: infinite,
        q25,
        median,
        q75,
    })
}

/// Distribution of per-sample model-to-human loss ratios, split by the given
/// triage decisions.
pub fn triage_ratio_report<M: DifferentiableModel>(
    model: &M,
    decisions: &[bool],
    data: &Dataset,
    loss: &LossFn,
) -> Result<RatioReport> {
    if decisions.len() != data.len() {
        return Err(Error::LengthMismatch(format!(
            "{} decisions for {} samples",
            decisions.len(),
            data.len()
        )));
    }
    let mut kept = Vec::new();
    let mut kept_inf = 0usize;
    let mut deferred = Vec::new();
    let mut deferred_inf = 0usize;
    for (sample, &defer) in data.samples().iter().zip(decisions) {
        let ml = model.sample_loss(sample, loss)?;
        let hl = human_loss(sample, loss)?;
        let (ratios, inf) = if defer {
            (&mut deferred, &mut deferred_inf)
        } else {
            (&mut kept, &mut kept_inf)
        };
        if hl < 1e-12 {
            *inf += 1;
        } else {
            ratios.push(ml / hl);
        }
    }
    Ok(RatioReport {
        kept: summarize_group(&kept, kept_inf),
        deferred: summarize_group(&deferred, deferred_inf),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sample;
    use crate::model::SigmoidModel1D;

    fn regression_dataset(rows: &[(f64, f64, Vec<f64>)]) -> Dataset {
        let samples = rows
            .iter()
            .map(|(x, y, h)| Sample::regression(vec![*x], *y, h.clone()))
            .collect();
        Dataset::new(samples, TaskKind::Regression, None).unwrap()
    }

    #[test]
    fn system_loss_extremes() {
        let data = regression_dataset(&[
            (1.0, 0.8, vec![0.7]),
            (-1.0, 0.3, vec![0.25]),
            (0.0, 0.5, vec![0.6]),
        ]);
        let model = SigmoidModel1D::new(0.0);
        let all_model = system_loss(&[false, false, false], &model, &data, &LossFn::Squared).unwrap();
        let expected: f64 = data
            .samples()
            .iter()
            .map(|s| model.sample_loss(s, &LossFn::Squared).unwrap())
            .sum::<f64>()
            / 3.0;
        assert!((all_model - expected).abs() < 1e-15);

        let all_human = system_loss(&[true, true, true], &model, &data, &LossFn::Squared).unwrap();
        let expected: f64 = data
            .samples()
            .iter()
            .map(|s| human_loss(s, &LossFn::Squared).unwrap())
            .sum::<f64>()
            / 3.0;
        assert!((all_human - expected).abs() < 1e-15);
    }

    #[test]
    fn system_loss_mixed_hand_computed() {
        let data = regression_dataset(&[
            (1.0, 0.8, vec![0.7]),   // model (0.5-0.8)^2 = 0.09
            (-1.0, 0.3, vec![0.25]), // human (0.25-0.3)^2 = 0.0025
            (0.0, 0.5, vec![0.6]),   // model (0.5-0.5)^2 = 0
        ]);
        let model = SigmoidModel1D::new(0.0);
        let v = system_loss(&[false, true, false], &model, &data, &LossFn::Squared).unwrap();
        assert!((v - (0.09 + 0.0025) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn system_loss_length_mismatch_errors() {
        let data = regression_dataset(&[(1.0, 0.8, vec![0.7])]);
        let model = SigmoidModel1D::new(0.0);
        assert!(system_loss(&[true, false], &model, &data, &LossFn::Squared).is_err());
    }

    #[test]
    fn biased_loss_equals_system_loss_for_point_mass_humans() {
        let data = regression_dataset(&[
            (1.0, 0.8, vec![0.7, 0.7]),
            (-1.0, 0.3, vec![0.2, 0.2]),
        ]);
        let model = SigmoidModel1D::new(0.0);
        let decisions = vec![true, true];
        let a = system_loss(&decisions, &model, &data, &LossFn::Squared).unwrap();
        let b = biased_point_estimate_loss(&decisions, &model, &data).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn biased_loss_gap_is_deferred_variance() {
        // y = 0, h = [-1, 1]: averaged human term 1, point-estimate term 0.
        let data = regression_dataset(&[(0.0, 0.0, vec![-1.0, 1.0]), (1.0, 0.73, vec![0.7])]);
        let model = SigmoidModel1D::new(1.0);
        let decisions = vec![true, false];
        let unbiased = system_loss(&decisions, &model, &data, &LossFn::Squared).unwrap();
        let biased = biased_point_estimate_loss(&decisions, &model, &data).unwrap();
        // Gap = variance of h on the deferred sample / n = 1 * (1/2).
        assert!((unbiased - biased - 0.5).abs() < 1e-12);
    }

    #[test]
    fn biased_loss_rejects_classification() {
        let samples = vec![Sample::classification(vec![0.0], 0, vec![0])];
        let data = Dataset::new(samples, TaskKind::Classification, Some(2)).unwrap();
        let model = crate::model::SoftmaxLinearModel::zeros(1, 2);
        assert!(biased_point_estimate_loss(&[true], &model, &data).is_err());
    }

    #[test]
    fn gradient_norms_on_empty_sets_are_zero() {
        // Humans dreadful everywhere: nothing deferred at any budget.
        let data = regression_dataset(&[(1.0, 0.7, vec![9.0]), (-1.0, 0.3, vec![9.0])]);
        let model = SigmoidModel1D::new(1.0);
        let v = deferred_gradient_norm(&model, &data, 1.0, &LossFn::Squared).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn ratio_report_buckets_perfect_humans() {
        let data = regression_dataset(&[(1.0, 0.8, vec![0.8]), (-1.0, 0.3, vec![0.31])]);
        let model = SigmoidModel1D::new(0.0);
        let report =
            triage_ratio_report(&model, &[true, false], &data, &LossFn::Squared).unwrap();
        let deferred = report.deferred.unwrap();
        assert_eq!(deferred.infinite_count, 1);
        assert_eq!(deferred.count, 1);
        assert!(deferred.median.is_none());
        let kept = report.kept.unwrap();
        assert_eq!(kept.infinite_count, 0);
        assert!(kept.median.is_some());
    }

    #[test]
    fn ratio_report_marks_empty_group_absent() {
        let data = regression_dataset(&[(1.0, 0.8, vec![0.7])]);
        let model = SigmoidModel1D::new(0.0);
        let report = triage_ratio_report(&model, &[false], &data, &LossFn::Squared).unwrap();
        assert!(report.deferred.is_none());
        assert!(report.kept.is_some());
    }

    #[test]
    fn exact_policy_ratio_ordering() {
        // Under the exact threshold policy, deferred samples have the larger
        // model-to-human loss ratios.
        let data = regression_dataset(&[
            (1.0, 0.9, vec![0.89]),
            (-1.0, 0.1, vec![0.3]),
            (2.0, 0.99, vec![0.975]),
            (-2.0, 0.02, vec![0.3]),
        ]);
        let model = SigmoidModel1D::new(1.0);
        let (_, deferred) = policy_partition(&model, &data, 1.0, &LossFn::Squared).unwrap();
        let decisions: Vec<bool> = (0..data.len()).map(|i| deferred.contains(&i)).collect();
        let report = triage_ratio_report(&model, &decisions, &data, &LossFn::Squared).unwrap();
        if let (Some(k), Some(d)) = (report.kept, report.deferred) {
            if let (Some(mk), Some(md)) = (k.median, d.median) {
                assert!(md >= mk, "deferred median {md} < kept median {mk}");
            }
        }
    }
}
