//! Gradient validation: random (parameters, sample) draws checked against
//! central finite differences for every model architecture.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use triagekit::dataset::{RngSeed, Sample, TaskKind};
use triagekit::loss::LossFn;
use triagekit::model::{
    finite_difference_check, Activation, DifferentiableModel, MlpOutput, ModelKind, ModelSpec,
    Prediction,
};

use crate::config::Resolved;
use crate::CliError;

const THRESHOLD: f64 = 1e-4;
const GRADCHECK_STREAM: u64 = 700;

pub const SUPPORTED: [&str; 5] = ["sigmoid1d", "linear", "softmax_linear", "mlp_tanh", "mlp_relu"];

fn spec_for(kind: &str) -> Result<ModelSpec, CliError> {
    match kind {
        "sigmoid1d" => Ok(ModelSpec::Sigmoid1d),
        "linear" => Ok(ModelSpec::Linear { dim: 3 }),
        "softmax_linear" => Ok(ModelSpec::SoftmaxLinear { dim: 4, classes: 3 }),
        "mlp_tanh" => Ok(ModelSpec::Mlp {
            dim: 3,
            hidden: vec![8, 6],
            activation: Activation::Tanh,
            output: MlpOutput::Classes { classes: 3 },
        }),
        "mlp_relu" => Ok(ModelSpec::Mlp {
            dim: 3,
            hidden: vec![8, 6],
            activation: Activation::Relu,
            output: MlpOutput::Regression,
        }),
        other => Err(CliError::usage(format!(
            "unknown model kind {other:?}; supported: {}",
            SUPPORTED.join(", ")
        ))),
    }
}

fn random_sample(model: &ModelKind, rng: &mut ChaCha8Rng) -> Sample {
    let x: Vec<f64> = (0..model.input_dim())
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    match model.task_kind() {
        TaskKind::Regression => {
            let y = rng.random_range(-1.0..1.0);
            Sample::regression(x, y, vec![y])
        }
        TaskKind::Classification => {
            let classes = match model.predict(&vec![0.0; model.input_dim()]) {
                Ok(Prediction::Probabilities(p)) => p.len(),
                _ => 2,
            };
            let y = rng.random_range(0..classes);
            Sample::classification(x, y, vec![y])
        }
    }
}

fn randomize_parameters(model: &mut ModelKind, rng: &mut ChaCha8Rng) {
    let params: Vec<f64> = model
        .parameters()
        .iter()
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    model.set_parameters(&params).expect("layout unchanged");
}

/// A model wrapper whose analytic gradient is deliberately wrong; the
/// negative control for the checker.
struct Corrupted(ModelKind);

impl DifferentiableModel for Corrupted {
    fn task_kind(&self) -> TaskKind {
        self.0.task_kind()
    }
    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }
    fn parameters(&self) -> Vec<f64> {
        self.0.parameters()
    }
    fn set_parameters(&mut self, params: &[f64]) -> triagekit::Result<()> {
        self.0.set_parameters(params)
    }
    fn predict(&self, x: &[f64]) -> triagekit::Result<Prediction> {
        self.0.predict(x)
    }
    fn loss_gradient(&self, sample: &Sample, loss: &LossFn) -> triagekit::Result<Vec<f64>> {
        let mut g = self.0.loss_gradient(sample, loss)?;
        for (i, v) in g.iter_mut().enumerate() {
            *v += 0.05 * (i + 1) as f64;
        }
        Ok(g)
    }
}

impl Clone for Corrupted {
    fn clone(&self) -> Self {
        Corrupted(self.0.clone())
    }
}

fn loss_for_model(model: &ModelKind) -> LossFn {
    match model.task_kind() {
        TaskKind::Regression => LossFn::Squared,
        TaskKind::Classification => LossFn::cross_entropy_default(),
    }
}

fn check_kind(
    kind: &str,
    trials: usize,
    step: f64,
    seed: RngSeed,
    corrupt: bool,
) -> Result<f64, CliError> {
    let spec = spec_for(kind)?;
    let mut rng = ChaCha8Rng::from_base(seed, GRADCHECK_STREAM);
    let mut worst = 0.0f64;
    let mut done = 0usize;
    let mut attempts = 0usize;
    while done < trials {
        attempts += 1;
        if attempts > trials * 50 {
            return Err(CliError::runtime(format!(
                "could not draw {trials} valid trials for {kind}"
            )));
        }
        let mut model = spec.build(seed)?;
        randomize_parameters(&mut model, &mut rng);
        let sample = random_sample(&model, &mut rng);
        // ReLU kinks break central differences; only check points with a
        // clear margin on every hidden pre-activation.
        if let ModelKind::Mlp(mlp) = &model {
            if mlp.activation() == Activation::Relu
                && mlp.min_abs_hidden_preactivation(&sample.x)? < 1e-3
            {
                continue;
            }
        }
        let loss = loss_for_model(&model);
        let err = if corrupt {
            finite_difference_check(&Corrupted(model), &sample, &loss, step)?
        } else {
            finite_difference_check(&model, &sample, &loss, step)?
        };
        worst = worst.max(err);
        done += 1;
    }
    Ok(worst)
}

trait FromBase {
    fn from_base(seed: RngSeed, stream: u64) -> Self;
}

impl FromBase for ChaCha8Rng {
    fn from_base(seed: RngSeed, stream: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
        rng.set_stream(stream);
        rng
    }
}

pub fn run(cfg: &Resolved, corrupt: bool) -> Result<(), CliError> {
    let kinds: Vec<String> = if cfg.gradcheck.models.is_empty() {
        SUPPORTED.iter().map(|s| s.to_string()).collect()
    } else {
        cfg.gradcheck.models.clone()
    };
    let mut all_pass = true;
    let mut global_worst = 0.0f64;
    for kind in &kinds {
        let worst = check_kind(kind, cfg.gradcheck.trials, cfg.gradcheck.step, cfg.seed, corrupt)?;
        let pass = worst < THRESHOLD;
        all_pass &= pass;
        global_worst = global_worst.max(worst);
        println!(
            "{kind}: worst relative error {worst:.3e} over {} trials -> {}",
            cfg.gradcheck.trials,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    println!("worst relative error overall {global_worst:.3e}");
    if all_pass {
        Ok(())
    } else {
        Err(CliError::runtime(format!(
            "gradient check failed (threshold {THRESHOLD:.0e})"
        )))
    }
}
