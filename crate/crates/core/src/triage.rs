//! Optimal threshold triage: per-sample model-minus-human loss differences,
//! the empirical budget threshold, training-time sample selection, and the
//! thresholded system loss.
//!
//! The deferral rule is `diff > t` with `t` the `(floor(b*n) + 1)`-th largest
//! difference floored at zero, which attains the budget-constrained optimum
//! without ever solving the threshold objective numerically. A grid-scan
//! oracle for that objective lives in the tests.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::loss::{human_loss, LossFn};
use crate::model::DifferentiableModel;

/// Model loss minus average human loss for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffScore {
    pub index: usize,
    pub diff: f64,
}

/// Deterministic threshold policy: defer exactly when `diff > threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactTriagePolicy {
    pub threshold: f64,
    pub budget: f64,
}

impl ExactTriagePolicy {
    pub fn fit(diffs: &[f64], budget: f64) -> Result<Self> {
        Ok(ExactTriagePolicy {
            threshold: empirical_threshold(diffs, budget)?,
            budget,
        })
    }
}

/// Split of a batch into model-trained and human-routed indices. Both lists
/// are in ascending index order so downstream reductions have a fixed
/// summation order.
#[derive(Debug, Clone, PartialEq)]
pub struct TriageSelection {
    /// Indices kept for model training.
    pub kept: Vec<usize>,
    /// The complement, routed to humans.
    pub deferred: Vec<usize>,
}

/// `floor(b * n)` with a relative epsilon so values that are integers up to
/// f64 rounding (e.g. 0.6 * 5) land on the intended integer.
pub(crate) fn budget_count(budget: f64, n: usize) -> usize {
    let raw = budget * n as f64;
    ((raw + 1e-9).floor() as usize).min(n)
}

fn validate_budget(budget: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&budget) {
        return Err(Error::InvalidConfig(format!(
            "budget must lie in [0, 1], got {budget}"
        )));
    }
    Ok(())
}

/// Per-sample model-minus-human loss differences, in batch order.
pub fn diff_scores<M: DifferentiableModel>(
    model: &M,
    batch: &[Sample],
    loss: &LossFn,
) -> Result<Vec<DiffScore>> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    batch
        .iter()
        .enumerate()
        .map(|(index, sample)| {
            let diff = model.sample_loss(sample, loss)? - human_loss(sample, loss)?;
            Ok(DiffScore { index, diff })
        })
        .collect()
}

/// Empirical budget threshold: `max(0, d_(k+1))` where `d_(k)` is the k-th
/// largest diff and `k = floor(b * n)`; the out-of-range order statistic
/// `d_(n+1)` is treated as zero. When the threshold is positive, exactly
/// `floor(b * n)` diffs lie strictly above it, up to ties at the boundary.
pub fn empirical_threshold(diffs: &[f64], budget: f64) -> Result<f64> {
    if diffs.is_empty() {
        return Err(Error::EmptyInput("diffs"));
    }
    validate_budget(budget)?;
    let n = diffs.len();
    let k = budget_count(budget, n);
    if k >= n {
        return Ok(0.0);
    }
    let mut sorted = diffs.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(sorted[k].max(0.0))
}

/// Deferral decision of the threshold policy: true means route to a human.
/// Strict inequality: ties at the threshold are not deferred.
pub fn decide(policy: &ExactTriagePolicy, diff: f64) -> bool {
    diff > policy.threshold
}

/// Training-time selection from precomputed diffs: keeps the
/// `max(ceil((1 - b) * n), p)` samples with smallest diff, where `p` counts
/// strictly negative diffs. Ties break by ascending index.
pub fn select_by_diffs(diffs: &[f64], budget: f64) -> Result<TriageSelection> {
    if diffs.is_empty() {
        return Err(Error::EmptyInput("diffs"));
    }
    validate_budget(budget)?;
    let n = diffs.len();
    // ceil((1 - b) * n) == n - floor(b * n) for the same rounding intent.
    let keep_target = n - budget_count(budget, n);
    let negatives = diffs.iter().filter(|&&d| d < 0.0).count();
    let keep = keep_target.max(negatives);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        diffs[a]
            .partial_cmp(&diffs[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = order[..keep].to_vec();
    kept.sort_unstable();
    let mut deferred: Vec<usize> = order[keep..].to_vec();
    deferred.sort_unstable();
    Ok(TriageSelection { kept, deferred })
}

/// Training-time selection computed from a model and batch.
pub fn select_training_subset<M: DifferentiableModel>(
    model: &M,
    batch: &[Sample],
    budget: f64,
    loss: &LossFn,
) -> Result<TriageSelection> {
    let diffs: Vec<f64> = diff_scores(model, batch, loss)?
        .into_iter()
        .map(|d| d.diff)
        .collect();
    select_by_diffs(&diffs, budget)
}

/// System loss of the model under its own optimal threshold policy:
/// the empirical mean of `model_loss - Thres_t(diff, 0)`, which charges
/// humans exactly on the samples the policy defers.
pub fn thresholded_system_loss<M: DifferentiableModel>(
    model: &M,
    data: &Dataset,
    budget: f64,
    loss: &LossFn,
) -> Result<f64> {
    validate_budget(budget)?;
    let scores = diff_scores(model, data.samples(), loss)?;
    let diffs: Vec<f64> = scores.iter().map(|d| d.diff).collect();
    let threshold = empirical_threshold(&diffs, budget)?;
    let mut total = 0.0;
    for (sample, diff) in data.samples().iter().zip(&diffs) {
        let model_loss = model.sample_loss(sample, loss)?;
        total += model_loss - if *diff > threshold { *diff } else { 0.0 };
    }
    Ok(total / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, TaskKind};
    use crate::model::SigmoidModel1D;
    use proptest::prelude::*;

    #[test]
    fn threshold_floors_at_zero_when_humans_never_better() {
        let diffs = vec![-0.5, -0.1, -2.0];
        for b in [0.0, 0.3, 0.7, 1.0] {
            assert_eq!(empirical_threshold(&diffs, b).unwrap(), 0.0);
        }
    }

    #[test]
    fn threshold_is_order_statistic() {
        let diffs = vec![1.0, 2.0, 3.0, 4.0];
        let t = empirical_threshold(&diffs, 0.5).unwrap();
        assert_eq!(t, 2.0);
        let policy = ExactTriagePolicy {
            threshold: t,
            budget: 0.5,
        };
        let deferred: Vec<usize> = diffs
            .iter()
            .enumerate()
            .filter(|(_, &d)| decide(&policy, d))
            .map(|(i, _)| i)
            .collect();
        assert_eq!(deferred, vec![2, 3]);
    }

    #[test]
    fn budget_one_reduces_to_sign_rule() {
        let diffs = vec![-1.0, 0.5, 2.0, -0.2];
        assert_eq!(empirical_threshold(&diffs, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn decide_uses_strict_inequality() {
        let policy = ExactTriagePolicy {
            threshold: 0.0,
            budget: 1.0,
        };
        assert!(decide(&policy, 0.5));
        assert!(!decide(&policy, -0.1));
        assert!(!decide(&policy, 0.0));
        let policy = ExactTriagePolicy {
            threshold: 0.3,
            budget: 0.5,
        };
        assert!(!decide(&policy, 0.3));
    }

    #[test]
    fn selection_keeps_everything_at_budget_zero() {
        let diffs = vec![3.0, -1.0, 2.0];
        let sel = select_by_diffs(&diffs, 0.0).unwrap();
        assert_eq!(sel.kept.len(), 3);
        assert!(sel.deferred.is_empty());
    }

    #[test]
    fn selection_at_budget_one_keeps_only_negative_diffs() {
        let diffs = vec![3.0, -1.0, 2.0, -0.5];
        let sel = select_by_diffs(&diffs, 1.0).unwrap();
        assert_eq!(sel.kept, vec![1, 3]);
        assert_eq!(sel.deferred, vec![0, 2]);
    }

    #[test]
    fn five_sample_worked_example() {
        // ceil(0.6 * 5) = 3, p = 2: kept are the three smallest diffs.
        let diffs = vec![-2.0, -1.0, 0.5, 1.0, 3.0];
        let sel = select_by_diffs(&diffs, 0.4).unwrap();
        assert_eq!(sel.kept, vec![0, 1, 2]);
        assert_eq!(sel.deferred, vec![3, 4]);

        // Cross-check: deferred equals the threshold policy's deferral set.
        let policy = ExactTriagePolicy::fit(&diffs, 0.4).unwrap();
        let by_policy: Vec<usize> = diffs
            .iter()
            .enumerate()
            .filter(|(_, &d)| decide(&policy, d))
            .map(|(i, _)| i)
            .collect();
        assert_eq!(by_policy, sel.deferred);
    }

    #[test]
    fn empty_diffs_error() {
        assert!(empirical_threshold(&[], 0.5).is_err());
        assert!(select_by_diffs(&[], 0.5).is_err());
    }

    fn dataset_from_columns(xs: &[f64], ys: &[f64], hs: &[f64]) -> Dataset {
        let samples = xs
            .iter()
            .zip(ys)
            .zip(hs)
            .map(|((&x, &y), &h)| crate::dataset::Sample::regression(vec![x], y, vec![h]))
            .collect();
        Dataset::new(samples, TaskKind::Regression, None).unwrap()
    }

    #[test]
    fn thresholded_loss_equals_plain_loss_when_model_dominates() {
        // Humans far off on every sample -> no deferral at any budget.
        let model = SigmoidModel1D::new(1.0);
        let xs = [-1.0, 0.0, 1.0];
        let ys: Vec<f64> = xs.iter().map(|&x| crate::model::sigmoid(x)).collect();
        let hs = vec![5.0, 5.0, 5.0];
        let data = dataset_from_columns(&xs, &ys, &hs);
        let v = thresholded_system_loss(&model, &data, 1.0, &LossFn::Squared).unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn thresholded_loss_is_zero_with_perfect_humans_at_full_budget() {
        let model = SigmoidModel1D::new(0.0);
        let xs = [-2.0, -1.0, 1.0, 2.0];
        let ys = [0.9, 0.8, 0.1, 0.05];
        let hs = ys;
        let data = dataset_from_columns(&xs, &ys, &hs);
        let v = thresholded_system_loss(&model, &data, 1.0, &LossFn::Squared).unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn thresholded_loss_mixes_kept_and_deferred_terms() {
        let model = SigmoidModel1D::new(0.0);
        let xs = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let ys = [0.9, 0.2, 0.5, 0.8, 0.1];
        let hs = [0.89, 0.21, 0.9, 0.79, 0.11];
        let data = dataset_from_columns(&xs, &ys, &hs);
        let b = 0.4;
        let v = thresholded_system_loss(&model, &data, b, &LossFn::Squared).unwrap();

        // Brute-force the same quantity from the explicit policy.
        let scores = diff_scores(&model, data.samples(), &LossFn::Squared).unwrap();
        let diffs: Vec<f64> = scores.iter().map(|d| d.diff).collect();
        let policy = ExactTriagePolicy::fit(&diffs, b).unwrap();
        let mut total = 0.0;
        for (s, &d) in data.samples().iter().zip(&diffs) {
            if decide(&policy, d) {
                total += human_loss(s, &LossFn::Squared).unwrap();
            } else {
                total += model.sample_loss(s, &LossFn::Squared).unwrap();
            }
        }
        assert!((v - total / 5.0).abs() < 1e-12);
    }

    /// Grid-scan oracle for the threshold objective
    /// `E[tau * b + max(diff - tau, 0)]`.
    fn grid_scan_objective(diffs: &[f64], budget: f64) -> (f64, f64) {
        let objective = |tau: f64| {
            diffs
                .iter()
                .map(|&d| tau * budget + (d - tau).max(0.0))
                .sum::<f64>()
                / diffs.len() as f64
        };
        let hi = diffs.iter().cloned().fold(0.0f64, f64::max) + 1.0;
        let mut best = (f64::INFINITY, 0.0);
        let steps = 200_000;
        for i in 0..=steps {
            let tau = hi * i as f64 / steps as f64;
            let v = objective(tau);
            if v < best.0 {
                best = (v, tau);
            }
        }
        best
    }

    #[test]
    fn threshold_matches_grid_scan_on_worked_example() {
        let diffs = vec![1.0, 2.0, 3.0, 4.0];
        let b = 0.5;
        let t = empirical_threshold(&diffs, b).unwrap();
        let objective = |tau: f64| {
            diffs
                .iter()
                .map(|&d| tau * b + (d - tau).max(0.0))
                .sum::<f64>()
                / diffs.len() as f64
        };
        let (grid_val, _) = grid_scan_objective(&diffs, b);
        assert!(objective(t) <= grid_val + 1e-9);
    }

    proptest! {
        /// The sorting shortcut attains the grid-scan minimum of the
        /// threshold objective.
        #[test]
        fn threshold_attains_tau_objective_minimum(
            diffs in proptest::collection::vec(-1.0f64..1.0, 1..20),
            b_idx in 0usize..5,
        ) {
            let b = [0.0, 0.25, 0.5, 0.75, 1.0][b_idx];
            let t = empirical_threshold(&diffs, b).unwrap();
            let objective = |tau: f64| {
                diffs.iter().map(|&d| tau * b + (d - tau).max(0.0)).sum::<f64>()
                    / diffs.len() as f64
            };
            let (grid_val, _) = grid_scan_objective(&diffs, b);
            prop_assert!(objective(t) <= grid_val + 1e-9);
        }

        /// Budget feasibility: the policy never defers more than floor(b*n),
        /// and the training selection always partitions the batch.
        #[test]
        fn deferral_respects_budget(
            diffs in proptest::collection::vec(-1.0f64..1.0, 1..30),
            b_idx in 0usize..5,
        ) {
            let b = [0.0, 0.25, 0.5, 0.75, 1.0][b_idx];
            let n = diffs.len();
            let t = empirical_threshold(&diffs, b).unwrap();
            let deferred = diffs.iter().filter(|&&d| d > t).count();
            if t > 0.0 {
                prop_assert!(deferred <= budget_count(b, n));
            }
            let sel = select_by_diffs(&diffs, b).unwrap();
            prop_assert_eq!(sel.kept.len() + sel.deferred.len(), n);
            let negatives = diffs.iter().filter(|&&d| d < 0.0).count();
            prop_assert!(sel.kept.len() >= negatives);
            prop_assert!(sel.deferred.len() <= budget_count(b, n).max(n - negatives));
        }
    }
}
