//! `triagekit`: train and evaluate predictive models under algorithmic
//! triage.
//!
//! Results go to stdout and to files under the output directory; progress
//! and warnings go to stderr. Exit codes: 0 on success, 2 for usage or
//! configuration errors, 1 for runtime failures. Every command is
//! deterministic given its configuration and seed.

mod commands;
mod config;
mod gradcheck;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{FileConfig, Overrides};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration: exit code 2.
    Usage(String),
    /// Failure while executing a valid request: exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

impl From<triagekit::Error> for CliError {
    fn from(e: triagekit::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "triagekit",
    version,
    about = "Supervised learning under algorithmic triage",
    long_about = "Trains parametric models jointly with threshold triage policies that route \
                  each instance to either the model or a human expert, and evaluates the \
                  resulting systems.\n\nThe default output directory is ./triagekit-out, \
                  overridable with --out or the TRIAGEKIT_OUT_DIR environment variable."
)]
struct Cli {
    /// Path to the shared JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed override; governs every randomized component.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for result files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file and print per-region statistics.
    Generate {
        /// Dataset file to write (default: `<out-dir>/dataset.jsonl`).
        #[arg(long)]
        data_out: Option<PathBuf>,
    },
    /// Train a model under triage, fit the policy approximator, and
    /// calibrate its deployment threshold.
    Train {
        /// Dataset file (line-delimited JSON with a header record).
        #[arg(long)]
        data: PathBuf,
        /// Maximum level of triage, overriding the config.
        #[arg(long)]
        budget: Option<f64>,
        /// Which parameters score minibatches during filtering.
        #[arg(long, value_enum)]
        filter_with: Option<FilterWithArg>,
    },
    /// Evaluate a trained model (and optionally its policy) on a dataset.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        /// Model checkpoint written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Policy checkpoint written by `train`; without it the model
        /// predicts every sample.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Sweep deployment strategies across triage budgets and seeds.
    Sweep {
        /// Dataset file; when absent, the configured synthetic benchmark is
        /// regenerated per seed.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Restrict to these methods (repeatable):
        /// ours, full_automation, score, confidence.
        #[arg(long = "method")]
        methods: Vec<String>,
        /// Restrict to these budgets (repeatable).
        #[arg(long = "budget")]
        budgets: Vec<f64>,
        /// Worker threads for independent grid cells.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Train the full-automation and triage models on the synthetic
    /// regression benchmark and report the four deployment settings.
    FourSettings {},
    /// Validate analytic gradients against finite differences.
    Gradcheck {
        /// Model kinds to check (repeatable): sigmoid1d, linear,
        /// softmax_linear, mlp_tanh, mlp_relu. Default: all.
        #[arg(long = "model")]
        models: Vec<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        step: Option<f64>,
        /// Negative-control fixture: perturb analytic gradients so the
        /// check must fail.
        #[arg(long, hide = true)]
        corrupt: bool,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum FilterWithArg {
    #[value(alias = "previous_step")]
    PreviousStep,
    #[value(alias = "current_iterate")]
    CurrentIterate,
}

impl From<FilterWithArg> for triagekit::FilterWith {
    fn from(v: FilterWithArg) -> Self {
        match v {
            FilterWithArg::PreviousStep => triagekit::FilterWith::PreviousStep,
            FilterWithArg::CurrentIterate => triagekit::FilterWith::CurrentIterate,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => Some(FileConfig::load(path)?),
        None => None,
    };
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
    };
    let mut resolved = config::resolve(file, &overrides)?;

    match cli.command {
        Command::Generate { data_out } => commands::generate(&resolved, data_out),
        Command::Train {
            data,
            budget,
            filter_with,
        } => {
            if let Some(b) = budget {
                if !(0.0..=1.0).contains(&b) {
                    return Err(CliError::usage(format!("--budget {b} outside [0, 1]")));
                }
                resolved.train.budget = b;
            }
            if let Some(f) = filter_with {
                resolved.train.filter_with = f.into();
            }
            commands::train(&resolved, &data)
        }
        Command::Evaluate {
            data,
            model,
            policy,
            budget,
        } => {
            if let Some(b) = budget {
                if !(0.0..=1.0).contains(&b) {
                    return Err(CliError::usage(format!("--budget {b} outside [0, 1]")));
                }
                resolved.train.budget = b;
            }
            commands::evaluate(&resolved, &data, &model, policy.as_deref())
        }
        Command::Sweep {
            data,
            methods,
            budgets,
            jobs,
        } => {
            if !methods.is_empty() {
                for m in &methods {
                    triagekit::baselines::Method::parse(m)
                        .map_err(|e| CliError::usage(e.to_string()))?;
                }
                resolved.sweep.methods = methods;
            }
            if !budgets.is_empty() {
                for b in &budgets {
                    if !(0.0..=1.0).contains(b) {
                        return Err(CliError::usage(format!("--budget {b} outside [0, 1]")));
                    }
                }
                resolved.sweep.budgets = budgets;
            }
            if let Some(j) = jobs {
                resolved.sweep.jobs = j.max(1);
            }
            commands::sweep(&resolved, data.as_deref())
        }
        Command::FourSettings {} => commands::four_settings(&resolved),
        Command::Gradcheck {
            models,
            trials,
            step,
            corrupt,
        } => {
            if !models.is_empty() {
                resolved.gradcheck.models = models;
            }
            if let Some(t) = trials {
                if t == 0 {
                    return Err(CliError::usage("--trials must be >= 1"));
                }
                resolved.gradcheck.trials = t;
            }
            if let Some(s) = step {
                if s.is_nan() || s <= 0.0 {
                    return Err(CliError::usage("--step must be positive"));
                }
                resolved.gradcheck.step = s;
            }
            gradcheck::run(&resolved, corrupt)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
