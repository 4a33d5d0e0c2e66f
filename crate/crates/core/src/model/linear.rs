//! Linear regression model `m(x) = w . x + bias`.

use serde::{Deserialize, Serialize};

use crate::dataset::{Sample, TaskKind};
use crate::error::{Error, Result};
use crate::loss::LossFn;
use crate::model::{check_input_dim, DifferentiableModel, Prediction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRegressionModel {
    pub w: Vec<f64>,
    pub bias: f64,
}

impl LinearRegressionModel {
    pub fn zeros(dim: usize) -> Self {
        LinearRegressionModel {
            w: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn from_parts(w: Vec<f64>, bias: f64) -> Self {
        LinearRegressionModel { w, bias }
    }

    fn output(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.bias
    }
}

impl DifferentiableModel for LinearRegressionModel {
    fn task_kind(&self) -> TaskKind {
        TaskKind::Regression
    }

    fn input_dim(&self) -> usize {
        self.w.len()
    }

    fn parameters(&self) -> Vec<f64> {
        let mut p = self.w.clone();
        p.push(self.bias);
        p
    }

    fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.w.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.w.len() + 1,
                got: params.len(),
            });
        }
        let d = self.w.len();
        self.w.copy_from_slice(&params[..d]);
        self.bias = params[d];
        Ok(())
    }

    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        check_input_dim(self.w.len(), x)?;
        Ok(Prediction::Real(self.output(x)))
    }

    fn loss_gradient(&self, sample: &Sample, loss: &LossFn) -> Result<Vec<f64>> {
        check_input_dim(self.w.len(), &sample.x)?;
        match loss {
            LossFn::Squared => {
                let y = sample.y.as_real()?;
                let scale = 2.0 * (self.output(&sample.x) - y);
                let mut g: Vec<f64> = sample.x.iter().map(|&xi| scale * xi).collect();
                g.push(scale);
                Ok(g)
            }
            LossFn::CrossEntropy { .. } => Err(Error::UnsupportedTask(
                "linear regressor only supports the squared loss".into(),
            )),
        }
    }
}
