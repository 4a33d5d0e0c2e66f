//! Feature-only triage policy approximator.
//!
//! The exact threshold policy needs labels and human predictions, so it
//! cannot run on unseen samples. This module holds the learned stand-in: a
//! logistic scorer fit to the exact policy's decisions, deployed by
//! thresholding its output at a validation-calibrated cutoff.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{stream_tags, RngSeed};
use crate::error::{Error, Result};
use crate::model::{sigmoid, Activation, DifferentiableModel, MlpModel, MlpOutput};

/// Logit backbone of the policy scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scorer {
    Linear { w: Vec<f64>, bias: f64 },
    Mlp(MlpModel),
}

impl Scorer {
    pub fn input_dim(&self) -> usize {
        match self {
            Scorer::Linear { w, .. } => w.len(),
            Scorer::Mlp(m) => m.input_dim(),
        }
    }

    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        match self {
            Scorer::Linear { w, bias } => {
                if x.len() != w.len() {
                    return Err(Error::DimensionMismatch {
                        expected: w.len(),
                        got: x.len(),
                    });
                }
                Ok(w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias)
            }
            Scorer::Mlp(m) => m.logit(x),
        }
    }

    /// Gradient of the logit with respect to the flat parameter vector.
    pub fn logit_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Scorer::Linear { w, .. } => {
                if x.len() != w.len() {
                    return Err(Error::DimensionMismatch {
                        expected: w.len(),
                        got: x.len(),
                    });
                }
                let mut g = x.to_vec();
                g.push(1.0);
                Ok(g)
            }
            Scorer::Mlp(m) => m.logit_gradient(x),
        }
    }

    pub fn parameters(&self) -> Vec<f64> {
        match self {
            Scorer::Linear { w, bias } => {
                let mut p = w.clone();
                p.push(*bias);
                p
            }
            Scorer::Mlp(m) => m.parameters(),
        }
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        match self {
            Scorer::Linear { w, bias } => {
                if params.len() != w.len() + 1 {
                    return Err(Error::DimensionMismatch {
                        expected: w.len() + 1,
                        got: params.len(),
                    });
                }
                let d = w.len();
                w.copy_from_slice(&params[..d]);
                *bias = params[d];
                Ok(())
            }
            Scorer::Mlp(m) => m.set_parameters(params),
        }
    }
}

/// Scorer architecture description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerSpec {
    Linear,
    Mlp { hidden: Vec<usize> },
}

impl ScorerSpec {
    pub fn build(&self, input_dim: usize, seed: RngSeed) -> Result<Scorer> {
        match self {
            ScorerSpec::Linear => Ok(Scorer::Linear {
                w: vec![0.0; input_dim],
                bias: 0.0,
            }),
            ScorerSpec::Mlp { hidden } => {
                let mut scorer_seed = seed;
                scorer_seed.0 ^= stream_tags::SCORER_INIT.rotate_left(32);
                Ok(Scorer::Mlp(MlpModel::new(
                    input_dim,
                    hidden,
                    Activation::Tanh,
                    MlpOutput::Regression,
                    scorer_seed,
                )?))
            }
        }
    }
}

/// Learned triage policy: a logistic scorer plus a deployment threshold.
/// Deployment defers exactly when `score(x) >= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxTriagePolicy {
    pub scorer: Scorer,
    /// Deployment cutoff in [0, 1]; calibrated on validation data.
    pub threshold: f64,
}

impl ApproxTriagePolicy {
    pub fn new(scorer: Scorer) -> Self {
        ApproxTriagePolicy {
            scorer,
            threshold: 0.5,
        }
    }

    /// Deferral score in (0, 1).
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.scorer.logit(x)?))
    }

    /// Test-time deferral decision: true routes the sample to a human.
    pub fn deploy_decision(&self, x: &[f64]) -> Result<bool> {
        Ok(self.score(x)? >= self.threshold)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PolicyCheckpoint {
    schema: String,
    policy: ApproxTriagePolicy,
}

const POLICY_SCHEMA: &str = "triagekit.policy.v1";

pub fn write_policy(policy: &ApproxTriagePolicy, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let cp = PolicyCheckpoint {
        schema: POLICY_SCHEMA.to_string(),
        policy: policy.clone(),
    };
    let line = serde_json::to_string(&cp).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(w, "{line}")?;
    Ok(())
}

pub fn read_policy(path: &Path) -> Result<ApproxTriagePolicy> {
    let file = File::open(path)?;
    let cp: PolicyCheckpoint = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Parse(format!("bad policy checkpoint: {e}")))?;
    if cp.schema != POLICY_SCHEMA {
        return Err(Error::Parse(format!("unknown policy schema {:?}", cp.schema)));
    }
    Ok(cp.policy)
}
