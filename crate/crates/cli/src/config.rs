//! The shared configuration file.
//!
//! One JSON document covers training hyperparameters, model and scorer
//! architectures, synthetic benchmark specs, sweep grids, and the gradient
//! checker. Command-line flags override individual keys; the top-level
//! `seed` (or `--seed`) governs every seeded component.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use triagekit::baselines::Method;
use triagekit::dataset::RngSeed;
use triagekit::model::ModelSpec;
use triagekit::policy::ScorerSpec;
use triagekit::synthdata::{ClassificationSpec, RegressionSpec};
use triagekit::train::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerateTask {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub budgets: Vec<f64>,
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    pub jobs: usize,
    /// Which synthetic benchmark backs the sweep when no dataset file is
    /// given.
    pub data: GenerateTask,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            budgets: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            methods: Method::ALL.iter().map(|m| m.name().to_string()).collect(),
            seeds: vec![0],
            jobs: 1,
            data: GenerateTask::Classification,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    /// Model kinds to check; empty means all supported kinds.
    pub models: Vec<String>,
    pub trials: usize,
    pub step: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        GradcheckSection {
            models: Vec::new(),
            trials: 100,
            step: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub train: Option<TrainConfig>,
    pub model: Option<ModelSpec>,
    pub scorer: Option<ScorerSpec>,
    pub split_fractions: Option<(f64, f64, f64)>,
    pub generate: Option<GenerateTask>,
    pub regression_spec: Option<RegressionSpec>,
    pub classification_spec: Option<ClassificationSpec>,
    pub sweep: Option<SweepSection>,
    pub gradcheck: Option<GradcheckSection>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("bad config {}: {e}", path.display())))
    }
}

/// Configuration after merging the file, flags, and defaults.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub seed: RngSeed,
    pub out_dir: PathBuf,
    pub train: TrainConfig,
    /// Whether the config file provided a train section (as opposed to
    /// defaults).
    pub train_from_file: bool,
    pub model: Option<ModelSpec>,
    pub scorer: ScorerSpec,
    pub split_fractions: (f64, f64, f64),
    pub generate: GenerateTask,
    pub regression_spec: RegressionSpec,
    pub classification_spec: ClassificationSpec,
    pub sweep: SweepSection,
    pub gradcheck: GradcheckSection,
}

pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub fn resolve(file: Option<FileConfig>, overrides: &Overrides) -> Result<Resolved, CliError> {
    let file = file.unwrap_or_default();
    let seed = RngSeed(overrides.seed.or(file.seed).unwrap_or(0));

    let out_dir = overrides
        .out
        .clone()
        .or(file.out_dir.clone())
        .or_else(|| std::env::var_os("TRIAGEKIT_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("triagekit-out"));

    let train_from_file = file.train.is_some();
    let mut train = file.train.clone().unwrap_or_default();
    train.seed = seed;
    train
        .validate()
        .map_err(|e| CliError::usage(format!("invalid train config: {e}")))?;

    let mut regression_spec = file.regression_spec.clone().unwrap_or_default();
    regression_spec.seed = seed;
    regression_spec
        .validate()
        .map_err(|e| CliError::usage(format!("invalid regression_spec: {e}")))?;

    let mut classification_spec = file.classification_spec.clone().unwrap_or_default();
    classification_spec.seed = seed;
    classification_spec
        .validate()
        .map_err(|e| CliError::usage(format!("invalid classification_spec: {e}")))?;

    let split_fractions = file.split_fractions.unwrap_or((0.6, 0.2, 0.2));

    let sweep = file.sweep.clone().unwrap_or_default();
    for b in &sweep.budgets {
        if !(0.0..=1.0).contains(b) {
            return Err(CliError::usage(format!(
                "sweep budget {b} outside [0, 1]"
            )));
        }
    }
    for m in &sweep.methods {
        Method::parse(m).map_err(|e| CliError::usage(e.to_string()))?;
    }

    Ok(Resolved {
        seed,
        out_dir,
        train,
        train_from_file,
        model: file.model.clone(),
        scorer: file.scorer.clone().unwrap_or(ScorerSpec::Mlp {
            hidden: vec![16],
        }),
        split_fractions,
        generate: file.generate.unwrap_or(GenerateTask::Regression),
        regression_spec,
        classification_spec,
        sweep,
        gradcheck: file.gradcheck.unwrap_or_default(),
    })
}
