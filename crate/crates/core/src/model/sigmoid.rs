//! One-parameter sigmoid regressor `m_theta(x) = 1 / (1 + exp(-theta * x))`.

use serde::{Deserialize, Serialize};

use crate::dataset::{Sample, TaskKind};
use crate::error::{Error, Result};
use crate::loss::LossFn;
use crate::model::{check_input_dim, sigmoid, DifferentiableModel, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidModel1D {
    pub theta: f64,
}

impl SigmoidModel1D {
    pub fn new(theta: f64) -> Self {
        SigmoidModel1D { theta }
    }
}

impl DifferentiableModel for SigmoidModel1D {
    fn task_kind(&self) -> TaskKind {
        TaskKind::Regression
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn parameters(&self) -> Vec<f64> {
        vec![self.theta]
    }

    fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: params.len(),
            });
        }
        self.theta = params[0];
        Ok(())
    }

    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        check_input_dim(1, x)?;
        Ok(Prediction::Real(sigmoid(self.theta * x[0])))
    }

    fn loss_gradient(&self, sample: &Sample, loss: &LossFn) -> Result<Vec<f64>> {
        check_input_dim(1, &sample.x)?;
        match loss {
            LossFn::Squared => {
                let x = sample.x[0];
                let y = sample.y.as_real()?;
                let s = sigmoid(self.theta * x);
                // d/dtheta (s - y)^2 = 2 (s - y) s (1 - s) x
                Ok(vec![2.0 * (s - y) * s * (1.0 - s) * x])
            }
            LossFn::CrossEntropy { .. } => Err(Error::UnsupportedTask(
                "sigmoid regressor only supports the squared loss".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_at_zero_is_half() {
        let m = SigmoidModel1D::new(0.0);
        assert_eq!(m.predict(&[3.7]).unwrap(), Prediction::Real(0.5));
        let m = SigmoidModel1D::new(1.0);
        assert_eq!(m.predict(&[0.0]).unwrap(), Prediction::Real(0.5));
    }

    #[test]
    fn predict_rejects_dimension_mismatch() {
        let m = SigmoidModel1D::new(0.0);
        assert!(m.predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn sample_loss_examples() {
        let m = SigmoidModel1D::new(0.0);
        let s = Sample::regression(vec![1.0], 0.5, vec![0.5]);
        assert_eq!(m.sample_loss(&s, &LossFn::Squared).unwrap(), 0.0);
        let s = Sample::regression(vec![1.0], 0.0, vec![0.0]);
        assert_eq!(m.sample_loss(&s, &LossFn::Squared).unwrap(), 0.25);
    }

    #[test]
    fn gradient_matches_hand_derivation() {
        // theta = 0, x = 1, y = 0: 2 * (0.5 - 0) * 0.5 * 0.5 * 1 = 0.25.
        let m = SigmoidModel1D::new(0.0);
        let s = Sample::regression(vec![1.0], 0.0, vec![0.0]);
        let g = m.loss_gradient(&s, &LossFn::Squared).unwrap();
        assert!((g[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gradient_zero_at_exact_fit() {
        let m = SigmoidModel1D::new(1.7);
        let y = sigmoid(1.7 * 0.4);
        let s = Sample::regression(vec![0.4], y, vec![y]);
        let g = m.loss_gradient(&s, &LossFn::Squared).unwrap();
        assert_eq!(g[0], 0.0);
    }
}
