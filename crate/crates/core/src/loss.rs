//! Loss functions and per-instance human loss estimation.

use serde::{Deserialize, Serialize};

use crate::dataset::{Sample, Target};
use crate::error::{Error, Result};
use crate::model::Prediction;

pub const DEFAULT_SMOOTHING_EPSILON: f64 = 1e-6;

/// Loss function selector. Squared error for regression, smoothed cross
/// entropy for classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossFn {
    Squared,
    CrossEntropy { smoothing_epsilon: f64 },
}

impl LossFn {
    pub fn cross_entropy_default() -> Self {
        LossFn::CrossEntropy {
            smoothing_epsilon: DEFAULT_SMOOTHING_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let LossFn::CrossEntropy { smoothing_epsilon } = self {
            if !(*smoothing_epsilon > 0.0 && *smoothing_epsilon < 0.5) {
                return Err(Error::InvalidConfig(format!(
                    "smoothing_epsilon must lie in (0, 0.5), got {smoothing_epsilon}"
                )));
            }
        }
        Ok(())
    }

    /// Loss of a model prediction against a target.
    pub fn loss(&self, prediction: &Prediction, y: &Target) -> Result<f64> {
        match (self, prediction) {
            (LossFn::Squared, Prediction::Real(y_hat)) => Ok(squared_loss(*y_hat, y.as_real()?)),
            (LossFn::CrossEntropy { smoothing_epsilon }, Prediction::Probabilities(p)) => {
                cross_entropy_loss(p, y.as_label()?, *smoothing_epsilon)
            }
            (LossFn::Squared, Prediction::Probabilities(_)) => Err(Error::UnsupportedTask(
                "squared loss expects a real-valued prediction".into(),
            )),
            (LossFn::CrossEntropy { .. }, Prediction::Real(_)) => Err(Error::UnsupportedTask(
                "cross-entropy loss expects a probability vector".into(),
            )),
        }
    }
}

/// `(y_hat - y)^2`. Symmetric and non-negative.
pub fn squared_loss(y_hat: f64, y: f64) -> f64 {
    let d = y_hat - y;
    d * d
}

/// Negative log-likelihood of class `y` under `p`, with `p[y]` clamped into
/// `[eps, 1 - eps]` so the result stays finite for degenerate vectors.
///
/// `p` must be a probability vector: components in `[0, 1]`, summing to 1
/// within 1e-9.
pub fn cross_entropy_loss(p: &[f64], y: usize, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidConfig(format!(
            "smoothing epsilon must lie in (0, 0.5), got {eps}"
        )));
    }
    if p.is_empty() {
        return Err(Error::EmptyInput("probability vector"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSimplex(format!("components sum to {sum}")));
    }
    if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::InvalidSimplex(
            "components must lie in [0, 1]".into(),
        ));
    }
    if y >= p.len() {
        return Err(Error::InvalidData(format!(
            "class index {y} out of range for {} classes",
            p.len()
        )));
    }
    Ok(-p[y].clamp(eps, 1.0 - eps).ln())
}

/// Empirical distribution over `k` classes induced by a list of human votes.
pub fn vote_distribution(h: &[Target], k: usize) -> Result<Vec<f64>> {
    if h.is_empty() {
        return Err(Error::EmptyInput("human predictions"));
    }
    let mut counts = vec![0usize; k];
    for vote in h {
        let c = vote.as_label()?;
        if c >= k {
            return Err(Error::InvalidData(format!(
                "human label {c} out of range for {k} classes"
            )));
        }
        counts[c] += 1;
    }
    let total = h.len() as f64;
    Ok(counts.iter().map(|&c| c as f64 / total).collect())
}

/// Average human loss on one sample.
///
/// Regression scores each recorded prediction with the loss and averages.
/// Classification scores the empirical vote distribution: the loss is
/// `-log P(h = y | x)` with epsilon smoothing, where `P(h | x)` is the
/// fraction of experts voting each class.
pub fn human_loss(sample: &Sample, loss: &LossFn) -> Result<f64> {
    if sample.h.is_empty() {
        return Err(Error::EmptyInput("human predictions"));
    }
    match loss {
        LossFn::Squared => {
            let y = sample.y.as_real()?;
            let mut total = 0.0;
            for pred in &sample.h {
                total += squared_loss(pred.as_real()?, y);
            }
            Ok(total / sample.h.len() as f64)
        }
        LossFn::CrossEntropy { smoothing_epsilon } => {
            let y = sample.y.as_label()?;
            let correct = sample
                .h
                .iter()
                .map(|v| v.as_label())
                .collect::<Result<Vec<_>>>()?
                .iter()
                .filter(|&&c| c == y)
                .count();
            let p_correct = correct as f64 / sample.h.len() as f64;
            Ok(-p_correct.clamp(*smoothing_epsilon, 1.0 - smoothing_epsilon).ln())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn squared_loss_examples() {
        assert_eq!(squared_loss(0.5, 0.5), 0.0);
        assert_eq!(squared_loss(1.0, 0.0), 1.0);
        assert!((squared_loss(0.2, 0.5) - 0.09).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_examples() {
        // One-hot at the true class with eps smoothing.
        let v = cross_entropy_loss(&[0.0, 1.0], 1, 1e-6).unwrap();
        assert_eq!(v, -(1.0f64 - 1e-6).ln());
        assert!((v - 1e-6).abs() < 1e-11);

        // p[y] = e^{-1} -> exactly 1.
        let e1 = (-1.0f64).exp();
        let v = cross_entropy_loss(&[e1, 1.0 - e1], 0, 1e-6).unwrap();
        assert!((v - 1.0).abs() < 1e-12);

        // Uniform over 3 classes -> ln 3, for any class.
        for y in 0..3 {
            let v = cross_entropy_loss(&[1.0 / 3.0; 3], y, 1e-6).unwrap();
            assert!((v - 3.0f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_rejects_bad_simplex() {
        assert!(cross_entropy_loss(&[0.5, 0.6], 0, 1e-6).is_err());
        assert!(cross_entropy_loss(&[1.2, -0.2], 0, 1e-6).is_err());
        assert!(cross_entropy_loss(&[0.5, 0.5], 2, 1e-6).is_err());
        assert!(cross_entropy_loss(&[0.5, 0.5], 0, 0.7).is_err());
    }

    #[test]
    fn human_loss_regression_mean() {
        let s = Sample::regression(vec![0.0], 0.5, vec![0.4, 0.6]);
        let v = human_loss(&s, &LossFn::Squared).unwrap();
        assert!((v - 0.01).abs() < 1e-15);
    }

    #[test]
    fn human_loss_unanimous_correct_experts() {
        let s = Sample::classification(vec![0.0], 1, vec![1, 1, 1]);
        let v = human_loss(&s, &LossFn::cross_entropy_default()).unwrap();
        assert!((v - (-(1.0 - 1e-6f64).ln())).abs() < 1e-15);
        assert!(v < 2e-6);
    }

    #[test]
    fn human_loss_split_vote() {
        // y appears in 2 of 4 votes -> P(h=y|x) = 0.5 -> -ln 0.5.
        let s = Sample::classification(vec![0.0], 0, vec![0, 1, 0, 1]);
        let v = human_loss(&s, &LossFn::cross_entropy_default()).unwrap();
        assert!((v - 0.5f64.ln().abs()).abs() < 1e-12);
    }

    #[test]
    fn human_loss_rejects_empty_h() {
        let s = Sample {
            x: vec![0.0],
            y: Target::Real(0.0),
            h: vec![],
        };
        assert!(human_loss(&s, &LossFn::Squared).is_err());
    }

    #[test]
    fn vote_distribution_counts() {
        let h = vec![Target::Label(0), Target::Label(2), Target::Label(0)];
        let p = vote_distribution(&h, 3).unwrap();
        assert_eq!(p, vec![2.0 / 3.0, 0.0, 1.0 / 3.0]);
    }

    proptest! {
        #[test]
        fn squared_loss_nonnegative_finite(a in -1e3f64..1e3, b in -1e3f64..1e3) {
            let v = squared_loss(a, b);
            prop_assert!(v.is_finite());
            prop_assert!(v >= 0.0);
            prop_assert_eq!(v, squared_loss(b, a));
        }

        #[test]
        fn human_loss_permutation_invariant(
            y in -2.0f64..2.0,
            mut h in proptest::collection::vec(-2.0f64..2.0, 1..8),
        ) {
            let s1 = Sample::regression(vec![0.0], y, h.clone());
            let v1 = human_loss(&s1, &LossFn::Squared).unwrap();
            h.reverse();
            let s2 = Sample::regression(vec![0.0], y, h);
            let v2 = human_loss(&s2, &LossFn::Squared).unwrap();
            prop_assert!((v1 - v2).abs() < 1e-12);
        }

        /// Jensen: averaging losses over the h list dominates the loss of the
        /// averaged prediction, with equality only for identical votes.
        #[test]
        fn human_loss_dominates_point_estimate(
            y in -2.0f64..2.0,
            h in proptest::collection::vec(-2.0f64..2.0, 1..8),
        ) {
            let mean = h.iter().sum::<f64>() / h.len() as f64;
            let s = Sample::regression(vec![0.0], y, h.clone());
            let avg = human_loss(&s, &LossFn::Squared).unwrap();
            let point = squared_loss(mean, y);
            prop_assert!(avg >= point - 1e-12);
            let all_equal = h.iter().all(|&v| v == h[0]);
            if !all_equal {
                let spread = h.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>();
                if spread > 1e-9 {
                    prop_assert!(avg > point);
                }
            }
        }

        #[test]
        fn cross_entropy_finite_nonnegative(
            raw in proptest::collection::vec(0.01f64..1.0, 2..6),
            idx in 0usize..6,
        ) {
            let sum: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / sum).collect();
            let y = idx % p.len();
            let v = cross_entropy_loss(&p, y, 1e-6).unwrap();
            prop_assert!(v.is_finite());
            prop_assert!(v >= 0.0);
        }
    }
}
