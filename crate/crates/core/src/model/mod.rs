//! Differentiable parametric predictors with hand-derived gradients.
//!
//! There is no autodiff tape here: every model implements its own analytic
//! parameter gradient, and [`finite_difference_check`] validates each one
//! against central differences.

mod linear;
mod mlp;
mod sigmoid;
mod softmax;

pub use linear::LinearRegressionModel;
pub use mlp::{Activation, MlpModel, MlpOutput};
pub use sigmoid::SigmoidModel1D;
pub use softmax::SoftmaxLinearModel;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{RngSeed, Sample, TaskKind};
use crate::error::{Error, Result};
use crate::loss::LossFn;

/// Model output: a real value for regression, a probability vector over
/// classes for classification.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Real(f64),
    Probabilities(Vec<f64>),
}

impl Prediction {
    pub fn as_real(&self) -> Result<f64> {
        match self {
            Prediction::Real(v) => Ok(*v),
            Prediction::Probabilities(_) => Err(Error::UnsupportedTask(
                "expected a real-valued prediction".into(),
            )),
        }
    }

    pub fn as_probabilities(&self) -> Result<&[f64]> {
        match self {
            Prediction::Probabilities(p) => Ok(p),
            Prediction::Real(_) => Err(Error::UnsupportedTask(
                "expected a probability vector".into(),
            )),
        }
    }

    /// Predicted class: argmax of the probability vector, ties broken toward
    /// the smallest class index.
    pub fn argmax_class(&self) -> Result<usize> {
        let p = self.as_probabilities()?;
        let mut best = 0;
        for (i, &v) in p.iter().enumerate().skip(1) {
            if v > p[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// Largest class probability; the model confidence used by the
    /// score-based and confidence-based strategies.
    pub fn confidence(&self) -> Result<f64> {
        let p = self.as_probabilities()?;
        Ok(p.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
    }
}

/// A parametric predictor exposing predictions, per-sample losses, and
/// analytic per-sample parameter gradients.
///
/// `predict` and `loss_gradient` are pure; training mutates a single owned
/// instance through `set_parameters`.
pub trait DifferentiableModel {
    fn task_kind(&self) -> TaskKind;
    fn input_dim(&self) -> usize;

    /// Flat parameter vector. `set_parameters` accepts the same layout.
    fn parameters(&self) -> Vec<f64>;
    fn set_parameters(&mut self, params: &[f64]) -> Result<()>;

    fn predict(&self, x: &[f64]) -> Result<Prediction>;

    /// Gradient of `sample_loss` with respect to the flat parameter vector.
    fn loss_gradient(&self, sample: &Sample, loss: &LossFn) -> Result<Vec<f64>>;

    fn num_parameters(&self) -> usize {
        self.parameters().len()
    }

    fn sample_loss(&self, sample: &Sample, loss: &LossFn) -> Result<f64> {
        loss.loss(&self.predict(&sample.x)?, &sample.y)
    }
}

pub(crate) fn check_input_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Compares the analytic gradient against central differences component-wise
/// and returns the maximum relative error, with denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_difference_check<M>(model: &M, sample: &Sample, loss: &LossFn, step: f64) -> Result<f64>
where
    M: DifferentiableModel + Clone,
{
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let analytic = model.loss_gradient(sample, loss)?;
    let base = model.parameters();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut params = base.clone();
        params[i] = base[i] + step;
        probe.set_parameters(&params)?;
        let plus = probe.sample_loss(sample, loss)?;
        params[i] = base[i] - step;
        probe.set_parameters(&params)?;
        let minus = probe.sample_loss(sample, loss)?;
        let numeric = (plus - minus) / (2.0 * step);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

/// Owned model of any supported architecture. This is the serializable unit
/// used for checkpoints and by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Sigmoid1d(SigmoidModel1D),
    Linear(LinearRegressionModel),
    SoftmaxLinear(SoftmaxLinearModel),
    Mlp(MlpModel),
}

macro_rules! delegate {
    ($self:ident, $m:ident => $body:expr) => {
        match $self {
            ModelKind::Sigmoid1d($m) => $body,
            ModelKind::Linear($m) => $body,
            ModelKind::SoftmaxLinear($m) => $body,
            ModelKind::Mlp($m) => $body,
        }
    };
}

impl DifferentiableModel for ModelKind {
    fn task_kind(&self) -> TaskKind {
        delegate!(self, m => m.task_kind())
    }

    fn input_dim(&self) -> usize {
        delegate!(self, m => m.input_dim())
    }

    fn parameters(&self) -> Vec<f64> {
        delegate!(self, m => m.parameters())
    }

    fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        delegate!(self, m => m.set_parameters(params))
    }

    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        delegate!(self, m => m.predict(x))
    }

    fn loss_gradient(&self, sample: &Sample, loss: &LossFn) -> Result<Vec<f64>> {
        delegate!(self, m => m.loss_gradient(sample, loss))
    }
}

/// Architecture description: enough to build a freshly initialized model.
///
/// Initialization is deterministic: scalar and linear models start at zero,
/// MLP weights are drawn uniform in `[-a, a]` with
/// `a = sqrt(6 / (fan_in + fan_out))` from the given seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Sigmoid1d,
    Linear { dim: usize },
    SoftmaxLinear { dim: usize, classes: usize },
    Mlp {
        dim: usize,
        hidden: Vec<usize>,
        activation: Activation,
        output: MlpOutput,
    },
}

impl ModelSpec {
    pub fn build(&self, seed: RngSeed) -> Result<ModelKind> {
        match self {
            ModelSpec::Sigmoid1d => Ok(ModelKind::Sigmoid1d(SigmoidModel1D::new(0.0))),
            ModelSpec::Linear { dim } => {
                if *dim == 0 {
                    return Err(Error::InvalidConfig("linear model needs dim >= 1".into()));
                }
                Ok(ModelKind::Linear(LinearRegressionModel::zeros(*dim)))
            }
            ModelSpec::SoftmaxLinear { dim, classes } => {
                if *dim == 0 || *classes < 2 {
                    return Err(Error::InvalidConfig(
                        "softmax model needs dim >= 1 and classes >= 2".into(),
                    ));
                }
                Ok(ModelKind::SoftmaxLinear(SoftmaxLinearModel::zeros(
                    *dim, *classes,
                )))
            }
            ModelSpec::Mlp {
                dim,
                hidden,
                activation,
                output,
            } => Ok(ModelKind::Mlp(MlpModel::new(
                *dim,
                hidden,
                *activation,
                *output,
                seed,
            )?)),
        }
    }

    pub fn task_kind(&self) -> TaskKind {
        match self {
            ModelSpec::Sigmoid1d | ModelSpec::Linear { .. } => TaskKind::Regression,
            ModelSpec::SoftmaxLinear { .. } => TaskKind::Classification,
            ModelSpec::Mlp { output, .. } => match output {
                MlpOutput::Regression => TaskKind::Regression,
                MlpOutput::Classes { .. } => TaskKind::Classification,
            },
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    schema: String,
    model: ModelKind,
}

const CHECKPOINT_SCHEMA: &str = "triagekit.model.v1";

/// Writes a model checkpoint. Parameter round-trips are bit-exact: floats are
/// serialized with shortest-round-trip formatting.
pub fn write_checkpoint(model: &ModelKind, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let cp = Checkpoint {
        schema: CHECKPOINT_SCHEMA.to_string(),
        model: model.clone(),
    };
    let line = serde_json::to_string(&cp).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(w, "{line}")?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<ModelKind> {
    let file = File::open(path)?;
    let cp: Checkpoint = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Parse(format!("bad checkpoint: {e}")))?;
    if cp.schema != CHECKPOINT_SCHEMA {
        return Err(Error::Parse(format!(
            "unknown checkpoint schema {:?}",
            cp.schema
        )));
    }
    Ok(cp.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sample;

    #[test]
    fn finite_difference_check_rejects_bad_step() {
        let model = SigmoidModel1D::new(0.3);
        let s = Sample::regression(vec![1.0], 0.2, vec![0.2]);
        assert!(finite_difference_check(&model, &s, &LossFn::Squared, 0.0).is_err());
        assert!(finite_difference_check(&model, &s, &LossFn::Squared, -1e-5).is_err());
    }

    #[test]
    fn zero_gradient_sample_stays_below_floor() {
        // y equals the model output exactly, so the gradient vanishes and the
        // error is measured against the absolute floor.
        let model = SigmoidModel1D::new(0.7);
        let y = sigmoid(0.7 * 1.3);
        let s = Sample::regression(vec![1.3], y, vec![y]);
        let err = finite_difference_check(&model, &s, &LossFn::Squared, 1e-7).unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn checkpoint_round_trip_bit_exact() {
        let model = ModelKind::Linear(LinearRegressionModel::from_parts(
            vec![0.1234567890123457, -2.718281828459045],
            1.0 / 3.0,
        ));
        let dir = std::env::temp_dir().join("triagekit-model-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        write_checkpoint(&model, &path).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(model.parameters(), back.parameters());
        assert_eq!(model, back);
    }

    #[test]
    fn argmax_ties_break_to_smallest_index() {
        let p = Prediction::Probabilities(vec![0.25, 0.25, 0.5]);
        assert_eq!(p.argmax_class().unwrap(), 2);
        let p = Prediction::Probabilities(vec![0.5, 0.5]);
        assert_eq!(p.argmax_class().unwrap(), 0);
    }
}
