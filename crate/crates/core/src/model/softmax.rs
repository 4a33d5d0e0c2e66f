//! Multinomial logistic model: `predict(x) = softmax(W x + b)`.

use serde::{Deserialize, Serialize};

use crate::dataset::{Sample, TaskKind};
use crate::error::{Error, Result};
use crate::loss::LossFn;
use crate::model::{check_input_dim, DifferentiableModel, Prediction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxLinearModel {
    /// Row-major `classes x dim` weight matrix.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub dim: usize,
}

impl SoftmaxLinearModel {
    pub fn zeros(dim: usize, classes: usize) -> Self {
        SoftmaxLinearModel {
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
            dim,
        }
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let k = self.classes();
        let mut z = self.bias.clone();
        for (c, zc) in z.iter_mut().enumerate().take(k) {
            let row = &self.weights[c * self.dim..(c + 1) * self.dim];
            *zc += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        z
    }
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl DifferentiableModel for SoftmaxLinearModel {
    fn task_kind(&self) -> TaskKind {
        TaskKind::Classification
    }

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn parameters(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        let expected = self.weights.len() + self.bias.len();
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        let nw = self.weights.len();
        self.weights.copy_from_slice(&params[..nw]);
        self.bias.copy_from_slice(&params[nw..]);
        Ok(())
    }

    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        check_input_dim(self.dim, x)?;
        Ok(Prediction::Probabilities(softmax(&self.logits(x))))
    }

    fn loss_gradient(&self, sample: &Sample, loss: &LossFn) -> Result<Vec<f64>> {
        check_input_dim(self.dim, &sample.x)?;
        let eps = match loss {
            LossFn::CrossEntropy { smoothing_epsilon } => *smoothing_epsilon,
            LossFn::Squared => {
                return Err(Error::UnsupportedTask(
                    "softmax model only supports the cross-entropy loss".into(),
                ))
            }
        };
        let y = sample.y.as_label()?;
        let k = self.classes();
        if y >= k {
            return Err(Error::InvalidData(format!(
                "label {y} out of range for {k} classes"
            )));
        }
        let p = softmax(&self.logits(&sample.x));
        let n_params = self.weights.len() + self.bias.len();
        // The loss clamps p[y] into [eps, 1 - eps]; inside the clamp the
        // gradient with respect to the logits is the usual p - onehot(y),
        // outside it is zero.
        if p[y] <= eps || p[y] >= 1.0 - eps {
            return Ok(vec![0.0; n_params]);
        }
        let mut g = vec![0.0; n_params];
        for c in 0..k {
            let dz = p[c] - if c == y { 1.0 } else { 0.0 };
            for (j, &xj) in sample.x.iter().enumerate() {
                g[c * self.dim + j] = dz * xj;
            }
            g[self.weights.len() + c] = dz;
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::finite_difference_check;

    #[test]
    fn zero_params_predict_uniform() {
        let m = SoftmaxLinearModel::zeros(2, 3);
        let p = m.predict(&[1.0, -1.0]).unwrap();
        let probs = p.as_probabilities().unwrap();
        for &v in probs {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn outputs_sum_to_one() {
        let mut m = SoftmaxLinearModel::zeros(2, 3);
        m.set_parameters(&[0.5, -1.0, 2.0, 0.1, -0.7, 0.3, 0.0, 1.0, -1.0])
            .unwrap();
        let p = m.predict(&[0.3, -2.0]).unwrap();
        let sum: f64 = p.as_probabilities().unwrap().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_param_loss_is_ln_k() {
        let m = SoftmaxLinearModel::zeros(3, 2);
        let s = Sample::classification(vec![1.0, 2.0, 3.0], 1, vec![1]);
        let v = m
            .sample_loss(&s, &LossFn::cross_entropy_default())
            .unwrap();
        assert!((v - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bias_gradient_is_probs_minus_onehot() {
        let m = SoftmaxLinearModel::zeros(2, 3);
        let s = Sample::classification(vec![0.0, 0.0], 1, vec![1]);
        let g = m
            .loss_gradient(&s, &LossFn::cross_entropy_default())
            .unwrap();
        let bias_grad = &g[6..9];
        let expected = [1.0 / 3.0, 1.0 / 3.0 - 1.0, 1.0 / 3.0];
        for (a, b) in bias_grad.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "bias grad {bias_grad:?}");
        }
        // Zero input kills the weight part.
        assert!(g[..6].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_agrees_with_finite_differences() {
        let mut m = SoftmaxLinearModel::zeros(2, 3);
        m.set_parameters(&[0.4, -0.2, 0.1, 0.9, -0.5, 0.3, 0.05, -0.02, 0.2])
            .unwrap();
        let s = Sample::classification(vec![0.7, -1.2], 2, vec![2]);
        let err = finite_difference_check(&m, &s, &LossFn::cross_entropy_default(), 1e-5).unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }
}
