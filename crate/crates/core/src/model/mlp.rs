//! Small dense feed-forward network with hand-written backpropagation.
//!
//! The output head is the identity for regression (scalar output) or a
//! softmax over classes. Hidden activations are tanh or ReLU; the ReLU
//! derivative at exactly zero is taken to be zero.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{stream_tags, RngSeed, Sample, TaskKind};
use crate::error::{Error, Result};
use crate::loss::LossFn;
use crate::model::softmax::softmax;
use crate::model::{check_input_dim, DifferentiableModel, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "head", rename_all = "snake_case")]
pub enum MlpOutput {
    Regression,
    Classes { classes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DenseLayer {
    /// Row-major `out x in`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    in_dim: usize,
}

impl DenseLayer {
    fn out_dim(&self) -> usize {
        self.bias.len()
    }

    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let z = row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + self.bias[o];
            out.push(z);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    input_dim: usize,
    hidden: Vec<usize>,
    activation: Activation,
    output: MlpOutput,
    layers: Vec<DenseLayer>,
}

impl MlpModel {
    /// Builds a freshly initialized network. Weights are uniform in
    /// `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        activation: Activation,
        output: MlpOutput,
        seed: RngSeed,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidConfig("mlp needs input_dim >= 1".into()));
        }
        if hidden.contains(&0) {
            return Err(Error::InvalidConfig(
                "mlp hidden widths must be positive".into(),
            ));
        }
        let out_dim = match output {
            MlpOutput::Regression => 1,
            MlpOutput::Classes { classes } => {
                if classes < 2 {
                    return Err(Error::InvalidConfig("mlp needs classes >= 2".into()));
                }
                classes
            }
        };
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(out_dim);

        let mut rng = seed.stream(stream_tags::MODEL_INIT);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for win in dims.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-a..a))
                .collect();
            layers.push(DenseLayer {
                weights,
                bias: vec![0.0; fan_out],
                in_dim: fan_in,
            });
        }
        Ok(MlpModel {
            input_dim,
            hidden: hidden.to_vec(),
            activation,
            output,
            layers,
        })
    }

    pub fn output_head(&self) -> MlpOutput {
        self.output
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Runs the network and caches every layer's pre-activation and
    /// activation. `acts[0]` is the input; `acts.last()` the final
    /// pre-head output.
    fn forward_cached(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n_layers = self.layers.len();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        let mut preacts: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        acts.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(acts.last().unwrap(), &mut z);
            let is_last = l + 1 == n_layers;
            let a = if is_last {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            preacts.push(z);
            acts.push(a);
        }
        (acts, preacts)
    }

    /// Backpropagates `dz_out` (gradient at the final pre-head output) to a
    /// flat parameter gradient in the `parameters()` layout.
    fn backward(&self, acts: &[Vec<f64>], preacts: &[Vec<f64>], dz_out: Vec<f64>) -> Vec<f64> {
        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut dz = dz_out;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &acts[l];
            let mut g = vec![0.0; layer.weights.len() + layer.bias.len()];
            for o in 0..layer.out_dim() {
                for (i, &xi) in input.iter().enumerate() {
                    g[o * layer.in_dim + i] = dz[o] * xi;
                }
                g[layer.weights.len() + o] = dz[o];
            }
            grads.push(g);
            if l > 0 {
                let mut prev = vec![0.0; layer.in_dim];
                for (o, &dzo) in dz.iter().enumerate() {
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (i, &w) in row.iter().enumerate() {
                        prev[i] += dzo * w;
                    }
                }
                for (i, v) in prev.iter_mut().enumerate() {
                    *v *= self.activation.derivative(preacts[l - 1][i]);
                }
                dz = prev;
            }
        }
        grads.reverse();
        grads.concat()
    }

    /// Final pre-head output of a scalar network; used when the MLP serves as
    /// a logit backbone.
    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        check_input_dim(self.input_dim, x)?;
        if self.output != MlpOutput::Regression {
            return Err(Error::UnsupportedTask(
                "logit output needs a scalar regression head".into(),
            ));
        }
        let (acts, _) = self.forward_cached(x);
        Ok(acts.last().unwrap()[0])
    }

    /// Gradient of `logit` with respect to the flat parameter vector.
    pub fn logit_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_input_dim(self.input_dim, x)?;
        if self.output != MlpOutput::Regression {
            return Err(Error::UnsupportedTask(
                "logit output needs a scalar regression head".into(),
            ));
        }
        let (acts, preacts) = self.forward_cached(x);
        Ok(self.backward(&acts, &preacts, vec![1.0]))
    }

    /// Smallest |pre-activation| over all hidden units for this input. Lets
    /// callers avoid finite-difference checks straddling a ReLU kink.
    pub fn min_abs_hidden_preactivation(&self, x: &[f64]) -> Result<f64> {
        check_input_dim(self.input_dim, x)?;
        let (_, preacts) = self.forward_cached(x);
        let n = preacts.len();
        let mut min = f64::INFINITY;
        for z in preacts.iter().take(n.saturating_sub(1)) {
            for &v in z {
                min = min.min(v.abs());
            }
        }
        Ok(min)
    }
}

impl DifferentiableModel for MlpModel {
    fn task_kind(&self) -> TaskKind {
        match self.output {
            MlpOutput::Regression => TaskKind::Regression,
            MlpOutput::Classes { .. } => TaskKind::Classification,
        }
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::new();
        for layer in &self.layers {
            p.extend_from_slice(&layer.weights);
            p.extend_from_slice(&layer.bias);
        }
        p
    }

    fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        let expected: usize = self
            .layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum();
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        let mut off = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        check_input_dim(self.input_dim, x)?;
        let (acts, _) = self.forward_cached(x);
        let out = acts.last().unwrap();
        match self.output {
            MlpOutput::Regression => Ok(Prediction::Real(out[0])),
            MlpOutput::Classes { .. } => Ok(Prediction::Probabilities(softmax(out))),
        }
    }

    fn loss_gradient(&self, sample: &Sample, loss: &LossFn) -> Result<Vec<f64>> {
        check_input_dim(self.input_dim, &sample.x)?;
        let (acts, preacts) = self.forward_cached(&sample.x);
        let out = acts.last().unwrap();
        let dz_out = match (self.output, loss) {
            (MlpOutput::Regression, LossFn::Squared) => {
                let y = sample.y.as_real()?;
                vec![2.0 * (out[0] - y)]
            }
            (MlpOutput::Classes { classes }, LossFn::CrossEntropy { smoothing_epsilon }) => {
                let y = sample.y.as_label()?;
                if y >= classes {
                    return Err(Error::InvalidData(format!(
                        "label {y} out of range for {classes} classes"
                    )));
                }
                let p = softmax(out);
                if p[y] <= *smoothing_epsilon || p[y] >= 1.0 - smoothing_epsilon {
                    return Ok(vec![0.0; self.num_parameters()]);
                }
                let mut dz: Vec<f64> = p;
                dz[y] -= 1.0;
                dz
            }
            _ => {
                return Err(Error::UnsupportedTask(
                    "mlp head and loss function do not match".into(),
                ))
            }
        };
        Ok(self.backward(&acts, &preacts, dz_out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::finite_difference_check;

    #[test]
    fn forward_is_finite_and_simplex_for_classes() {
        let m = MlpModel::new(
            3,
            &[8, 8],
            Activation::Tanh,
            MlpOutput::Classes { classes: 4 },
            RngSeed(3),
        )
        .unwrap();
        let p = m.predict(&[0.5, -2.0, 1.5]).unwrap();
        let probs = p.as_probabilities().unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(probs.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn two_hidden_layer_gradient_passes_finite_differences() {
        let m = MlpModel::new(
            2,
            &[6, 5],
            Activation::Tanh,
            MlpOutput::Regression,
            RngSeed(11),
        )
        .unwrap();
        let s = Sample::regression(vec![0.4, -0.9], 0.3, vec![0.3]);
        let err = finite_difference_check(&m, &s, &LossFn::Squared, 1e-5).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn classification_gradient_passes_finite_differences() {
        let m = MlpModel::new(
            3,
            &[7],
            Activation::Tanh,
            MlpOutput::Classes { classes: 3 },
            RngSeed(5),
        )
        .unwrap();
        let s = Sample::classification(vec![0.2, 0.8, -0.4], 1, vec![1]);
        let err = finite_difference_check(&m, &s, &LossFn::cross_entropy_default(), 1e-5).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn logit_gradient_matches_finite_differences() {
        let m = MlpModel::new(
            2,
            &[5],
            Activation::Tanh,
            MlpOutput::Regression,
            RngSeed(9),
        )
        .unwrap();
        let x = [0.7, -0.3];
        let g = m.logit_gradient(&x).unwrap();
        let params = m.parameters();
        let step = 1e-6;
        for i in 0..params.len() {
            let mut plus = m.clone();
            let mut p = params.clone();
            p[i] += step;
            plus.set_parameters(&p).unwrap();
            let mut minus = m.clone();
            p[i] = params[i] - step;
            minus.set_parameters(&p).unwrap();
            let numeric = (plus.logit(&x).unwrap() - minus.logit(&x).unwrap()) / (2.0 * step);
            assert!(
                (numeric - g[i]).abs() / numeric.abs().max(g[i].abs()).max(1e-8) < 1e-4,
                "param {i}: analytic {} vs numeric {numeric}",
                g[i]
            );
        }
    }

    #[test]
    fn same_seed_same_init() {
        let a = MlpModel::new(4, &[8], Activation::Relu, MlpOutput::Regression, RngSeed(1)).unwrap();
        let b = MlpModel::new(4, &[8], Activation::Relu, MlpOutput::Regression, RngSeed(1)).unwrap();
        assert_eq!(a.parameters(), b.parameters());
    }

    #[test]
    fn rejects_degenerate_architectures() {
        assert!(MlpModel::new(0, &[4], Activation::Tanh, MlpOutput::Regression, RngSeed(0)).is_err());
        assert!(MlpModel::new(2, &[0], Activation::Tanh, MlpOutput::Regression, RngSeed(0)).is_err());
        assert!(
            MlpModel::new(2, &[4], Activation::Tanh, MlpOutput::Classes { classes: 1 }, RngSeed(0))
                .is_err()
        );
    }
}
