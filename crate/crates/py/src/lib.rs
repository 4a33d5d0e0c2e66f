//! Python bindings: datasets, triage-filtered training, threshold policies,
//! and the synthetic four-setting experiment.
//!
//! Build with `cargo build -p triagekit-py --release` and import the
//! produced `libtriagekit_py.so` as `triagekit_py` (see
//! `python/smoke_test.py`).

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use triagekit::dataset::{split_dataset, Dataset as CoreDataset, RngSeed, TaskKind};
use triagekit::eval::{run_four_settings, FourSettingsConfig, SettingId};
use triagekit::loss::LossFn;
use triagekit::model::{DifferentiableModel, ModelSpec, Prediction};
use triagekit::policy::ScorerSpec;
use triagekit::synthdata::{gen_classification, gen_regression, ClassificationSpec, RegressionSpec};
use triagekit::train::{run_training_pipeline, FilterWith, TrainConfig, TriageRun};
use triagekit::triage;

fn to_py_err(e: triagekit::Error) -> PyErr {
    match e {
        triagekit::Error::Io(inner) => PyIOError::new_err(inner.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// An owned dataset: samples with features, targets, and human predictions.
#[pyclass(name = "Dataset", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: CoreDataset,
}

#[pymethods]
impl PyDataset {
    /// Reads a line-delimited dataset file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyDataset {
            inner: CoreDataset::read_file(&path).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_file(&path).map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn task_kind(&self) -> &'static str {
        match self.inner.task_kind() {
            TaskKind::Regression => "regression",
            TaskKind::Classification => "classification",
        }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn num_classes(&self) -> Option<usize> {
        self.inner.num_classes()
    }

    /// Feature vector of one sample.
    fn x(&self, index: usize) -> PyResult<Vec<f64>> {
        self.inner
            .samples()
            .get(index)
            .map(|s| s.x.clone())
            .ok_or_else(|| PyValueError::new_err(format!("index {index} out of range")))
    }

    /// Deterministic train/validation/test split.
    #[pyo3(signature = (fractions = (0.6, 0.2, 0.2), seed = 0))]
    fn split(&self, fractions: (f64, f64, f64), seed: u64) -> PyResult<(Self, Self, Self)> {
        let (tr, va, te) =
            split_dataset(&self.inner, fractions, RngSeed(seed)).map_err(to_py_err)?;
        Ok((
            PyDataset { inner: tr },
            PyDataset { inner: va },
            PyDataset { inner: te },
        ))
    }
}

/// Draws the piecewise-sigmoid regression benchmark with heteroscedastic
/// expert noise.
#[pyfunction]
#[pyo3(signature = (n = 72, seed = 0, replicate_humans = 1))]
fn gen_regression_benchmark(n: usize, seed: u64, replicate_humans: usize) -> PyResult<PyDataset> {
    let spec = RegressionSpec {
        n,
        replicate_humans,
        seed: RngSeed(seed),
        ..RegressionSpec::default()
    };
    Ok(PyDataset {
        inner: gen_regression(&spec).map_err(to_py_err)?,
    })
}

/// Draws the Gaussian-blob classification benchmark with a simulated expert
/// committee.
#[pyfunction]
#[pyo3(signature = (n = 600, seed = 0, committee_size = 10))]
fn gen_classification_benchmark(
    n: usize,
    seed: u64,
    committee_size: usize,
) -> PyResult<PyDataset> {
    let spec = ClassificationSpec {
        n,
        committee_size,
        seed: RngSeed(seed),
        ..ClassificationSpec::default()
    };
    Ok(PyDataset {
        inner: gen_classification(&spec).map_err(to_py_err)?,
    })
}

/// A trained model plus its feature-only triage policy.
#[pyclass(name = "TriageRun")]
struct PyTriageRun {
    run: TriageRun,
    loss: LossFn,
    budget: f64,
}

#[pymethods]
impl PyTriageRun {
    /// Real-valued prediction (regression models).
    fn predict(&self, x: Vec<f64>) -> PyResult<f64> {
        match self.run.model.predict(&x).map_err(to_py_err)? {
            Prediction::Real(v) => Ok(v),
            Prediction::Probabilities(_) => Err(PyValueError::new_err(
                "classification model; use predict_probabilities",
            )),
        }
    }

    /// Class probability vector (classification models).
    fn predict_probabilities(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        match self.run.model.predict(&x).map_err(to_py_err)? {
            Prediction::Probabilities(p) => Ok(p),
            Prediction::Real(_) => Err(PyValueError::new_err(
                "regression model; use predict",
            )),
        }
    }

    /// Deferral score of the policy approximator, in (0, 1).
    fn score(&self, x: Vec<f64>) -> PyResult<f64> {
        self.run.policy.score(&x).map_err(to_py_err)
    }

    /// Test-time deferral decision: True routes the sample to a human.
    fn deploy_decision(&self, x: Vec<f64>) -> PyResult<bool> {
        self.run.policy.deploy_decision(&x).map_err(to_py_err)
    }

    #[getter]
    fn deployment_threshold(&self) -> f64 {
        self.run.policy.threshold
    }

    #[getter]
    fn parameters(&self) -> Vec<f64> {
        self.run.model.parameters()
    }

    /// Training-set system loss under the model's own optimal policy, one
    /// value per outer step.
    #[getter]
    fn outer_losses(&self) -> Vec<f64> {
        self.run.trace.outer_losses.clone()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.run.trace.warnings.clone()
    }

    /// System loss of this model under its optimal threshold policy on the
    /// given dataset, at this run's training budget.
    fn system_loss(&self, data: &PyDataset) -> PyResult<f64> {
        triage::thresholded_system_loss(&self.run.model, &data.inner, self.budget, &self.loss)
            .map_err(to_py_err)
    }

    /// Per-sample model-minus-human loss differences on a dataset.
    fn diff_scores(&self, data: &PyDataset) -> PyResult<Vec<f64>> {
        Ok(triage::diff_scores(&self.run.model, data.inner.samples(), &self.loss)
            .map_err(to_py_err)?
            .into_iter()
            .map(|d| d.diff)
            .collect())
    }
}

/// Trains a model under triage on `train`, fits the policy approximator,
/// and calibrates its threshold on `val` when given.
#[pyfunction]
#[pyo3(signature = (
    train,
    val = None,
    budget = 1.0,
    seed = 0,
    outer_steps = 40,
    epochs = 40,
    batch_size = 32,
    learning_rate = 0.1,
    filter_with = "current_iterate",
))]
#[allow(clippy::too_many_arguments)]
fn train_under_triage(
    train: &PyDataset,
    val: Option<&PyDataset>,
    budget: f64,
    seed: u64,
    outer_steps: usize,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    filter_with: &str,
) -> PyResult<PyTriageRun> {
    let filter_with = match filter_with {
        "previous_step" => FilterWith::PreviousStep,
        "current_iterate" => FilterWith::CurrentIterate,
        other => {
            return Err(PyValueError::new_err(format!(
                "filter_with must be previous_step or current_iterate, got {other:?}"
            )))
        }
    };
    let config = TrainConfig {
        budget,
        outer_steps,
        epochs,
        batch_size,
        learning_rate,
        seed: RngSeed(seed),
        filter_with,
        ..TrainConfig::default()
    };
    config.validate().map_err(to_py_err)?;

    let data = &train.inner;
    let (loss, model_spec) = match data.task_kind() {
        TaskKind::Regression => (
            LossFn::Squared,
            if data.dim() == 1 {
                ModelSpec::Sigmoid1d
            } else {
                ModelSpec::Linear { dim: data.dim() }
            },
        ),
        TaskKind::Classification => (
            LossFn::cross_entropy_default(),
            ModelSpec::SoftmaxLinear {
                dim: data.dim(),
                classes: data.num_classes().unwrap_or(2),
            },
        ),
    };
    let scorer = ScorerSpec::Mlp { hidden: vec![16] };
    let run = run_training_pipeline(
        &model_spec,
        &scorer,
        data,
        val.map(|v| &v.inner),
        &loss,
        &config,
    )
    .map_err(to_py_err)?;
    Ok(PyTriageRun { run, loss, budget })
}

/// Budget threshold from a list of model-minus-human loss differences.
#[pyfunction]
fn empirical_threshold(diffs: Vec<f64>, budget: f64) -> PyResult<f64> {
    triage::empirical_threshold(&diffs, budget).map_err(to_py_err)
}

/// Runs the synthetic regression experiment and returns the four setting
/// losses keyed by their labels, plus the deferred fraction.
#[pyfunction]
#[pyo3(signature = (seed = 0, outer_steps = 20_000))]
fn four_settings(py: Python<'_>, seed: u64, outer_steps: usize) -> PyResult<Py<pyo3::types::PyDict>> {
    use pyo3::types::PyDict;
    let mut config = FourSettingsConfig::default().with_seed(RngSeed(seed));
    config.train.outer_steps = outer_steps;
    let report = run_four_settings(&config).map_err(to_py_err)?;
    let dict = PyDict::new(py);
    for setting in SettingId::ALL {
        dict.set_item(setting.label(), report.loss(setting))?;
    }
    dict.set_item("ordering_holds", report.strict_ordering_holds())?;
    dict.set_item("deferred_fraction", report.deferred_fraction)?;
    Ok(dict.unbind())
}

#[pymodule]
fn triagekit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyTriageRun>()?;
    m.add_function(wrap_pyfunction!(gen_regression_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(gen_classification_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(train_under_triage, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(four_settings, m)?)?;
    Ok(())
}
