//! Implementations of the CLI subcommands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use triagekit::baselines::Method;
use triagekit::dataset::{split_dataset, Dataset, TaskKind};
use triagekit::eval::{
    budget_sweep, deferred_gradient_norm, deploy_with_budget, kept_gradient_norm,
    run_four_settings, system_loss, triage_ratio_report, zero_one_error_with_draws, DataSplits,
    FourSettingsConfig, SettingId, SweepCell,
};
use triagekit::loss::{human_loss, LossFn};
use triagekit::model::{
    read_checkpoint, write_checkpoint, DifferentiableModel, ModelSpec,
};
use triagekit::policy::{read_policy, write_policy};
use triagekit::synthdata::{gen_classification, gen_regression};
use triagekit::train::{run_training_pipeline, TrainTrace};
use triagekit::RngSeed;

use crate::config::{GenerateTask, Resolved};
use crate::CliError;

/// Rng stream for human draws in `evaluate`; sweep cells use their own
/// grid-derived streams.
const EVALUATE_DRAW_STREAM: u64 = 600;

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

fn open_writer(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> Result<(), CliError> {
    let line = serde_json::to_string(value)
        .map_err(|e| CliError::runtime(format!("serialization failed: {e}")))?;
    writeln!(w, "{line}").map_err(|e| CliError::runtime(e.to_string()))
}

fn loss_for(data: &Dataset) -> LossFn {
    match data.task_kind() {
        TaskKind::Regression => LossFn::Squared,
        TaskKind::Classification => LossFn::cross_entropy_default(),
    }
}

fn default_model_spec(data: &Dataset) -> ModelSpec {
    match data.task_kind() {
        TaskKind::Regression => {
            if data.dim() == 1 {
                ModelSpec::Sigmoid1d
            } else {
                ModelSpec::Linear { dim: data.dim() }
            }
        }
        TaskKind::Classification => ModelSpec::SoftmaxLinear {
            dim: data.dim(),
            classes: data.num_classes().unwrap_or(2),
        },
    }
}

pub fn generate(cfg: &Resolved, data_out: Option<PathBuf>) -> Result<(), CliError> {
    ensure_out_dir(&cfg.out_dir)?;
    let path = data_out.unwrap_or_else(|| cfg.out_dir.join("dataset.jsonl"));

    match cfg.generate {
        GenerateTask::Regression => {
            let spec = &cfg.regression_spec;
            let data = gen_regression(spec)?;
            data.write_file(&path)?;
            println!("wrote {} samples to {}", data.len(), path.display());
            let mut counts = [0usize; 4];
            let mut sq = [0.0f64; 4];
            let mut votes = [0usize; 4];
            for s in data.samples() {
                let r = spec.region_of(s.x[0]);
                counts[r] += 1;
                let y = s.y.as_real()?;
                for h in &s.h {
                    let e = h.as_real()? - y;
                    sq[r] += e * e;
                    votes[r] += 1;
                }
            }
            for r in 0..4 {
                let var = if votes[r] > 0 {
                    sq[r] / votes[r] as f64
                } else {
                    f64::NAN
                };
                println!(
                    "region {r}: {} samples, empirical noise variance {var:.6} (spec {})",
                    counts[r], spec.noise_variances[r]
                );
            }
        }
        GenerateTask::Classification => {
            let spec = &cfg.classification_spec;
            let data = gen_classification(spec)?;
            data.write_file(&path)?;
            println!("wrote {} samples to {}", data.len(), path.display());
            let k = spec.classes;
            let mut counts = vec![0usize; k];
            let mut correct = vec![0usize; k];
            let mut votes = vec![0usize; k];
            for s in data.samples() {
                let y = s.y.as_label()?;
                counts[y] += 1;
                for v in &s.h {
                    if v.as_label()? == y {
                        correct[y] += 1;
                    }
                    votes[y] += 1;
                }
            }
            for c in 0..k {
                let acc = if votes[c] > 0 {
                    correct[c] as f64 / votes[c] as f64
                } else {
                    f64::NAN
                };
                println!(
                    "class {c}: {} samples, committee accuracy {acc:.4} (spec confusion {})",
                    counts[c], spec.confusion[c]
                );
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TraceRecord<'a> {
    OuterStep {
        step: usize,
        train_loss: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        val_loss: Option<f64>,
    },
    ApproxEpoch {
        epoch: usize,
        loss: f64,
    },
    Warning {
        message: &'a str,
    },
    Final {
        threshold: f64,
        stopped_early_at: Option<usize>,
        skipped_minibatches: usize,
    },
}

fn write_trace(path: &Path, trace: &TrainTrace, threshold: f64) -> Result<(), CliError> {
    let mut w = open_writer(path)?;
    for (i, &loss) in trace.outer_losses.iter().enumerate() {
        write_json_line(
            &mut w,
            &TraceRecord::OuterStep {
                step: i + 1,
                train_loss: loss,
                val_loss: trace.val_losses.get(i).copied(),
            },
        )?;
    }
    for (i, &loss) in trace.approx_epoch_losses.iter().enumerate() {
        write_json_line(
            &mut w,
            &TraceRecord::ApproxEpoch {
                epoch: i + 1,
                loss,
            },
        )?;
    }
    for message in &trace.warnings {
        write_json_line(&mut w, &TraceRecord::Warning { message })?;
    }
    write_json_line(
        &mut w,
        &TraceRecord::Final {
            threshold,
            stopped_early_at: trace.stopped_early_at,
            skipped_minibatches: trace.skipped_minibatches,
        },
    )
}

pub fn train(cfg: &Resolved, data_path: &Path) -> Result<(), CliError> {
    ensure_out_dir(&cfg.out_dir)?;
    let data = Dataset::read_file(data_path)?;
    let loss = loss_for(&data);
    let model_spec = cfg
        .model
        .clone()
        .unwrap_or_else(|| default_model_spec(&data));

    let (train_set, val_set, _test) = split_dataset(&data, cfg.split_fractions, cfg.seed)?;
    eprintln!(
        "training on {} samples (budget {}), validating on {}",
        train_set.len(),
        cfg.train.budget,
        val_set.len()
    );

    let run = run_training_pipeline(
        &model_spec,
        &cfg.scorer,
        &train_set,
        Some(&val_set),
        &loss,
        &cfg.train,
    )?;

    let model_path = cfg.out_dir.join("model.json");
    let policy_path = cfg.out_dir.join("policy.json");
    let trace_path = cfg.out_dir.join("trace.jsonl");
    write_checkpoint(&run.model, &model_path)?;
    write_policy(&run.policy, &policy_path)?;
    write_trace(&trace_path, &run.trace, run.policy.threshold)?;

    for warning in &run.trace.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "final training loss {:.6}",
        run.trace.outer_losses.last().copied().unwrap_or(f64::NAN)
    );
    if let Some(v) = run.trace.val_losses.last() {
        println!("final validation loss {v:.6}");
    }
    println!("deployment threshold {:.6}", run.policy.threshold);
    println!(
        "wrote {}, {}, {}",
        model_path.display(),
        policy_path.display(),
        trace_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalInstanceRecord {
    index: usize,
    x: Vec<f64>,
    y: triagekit::Target,
    model_loss: f64,
    human_loss: f64,
    decision: u8,
}

pub fn evaluate(
    cfg: &Resolved,
    data_path: &Path,
    model_path: &Path,
    policy_path: Option<&Path>,
) -> Result<(), CliError> {
    ensure_out_dir(&cfg.out_dir)?;
    let data = Dataset::read_file(data_path)?;
    let loss = loss_for(&data);
    let model = read_checkpoint(model_path)?;

    let decisions: Vec<bool> = match policy_path {
        Some(p) => {
            let policy = read_policy(p)?;
            deploy_with_budget(&policy, &data, cfg.train.budget)?
        }
        None => vec![false; data.len()],
    };

    let report_path = cfg.out_dir.join("per_instance.jsonl");
    let mut w = open_writer(&report_path)?;
    for (i, sample) in data.samples().iter().enumerate() {
        write_json_line(
            &mut w,
            &EvalInstanceRecord {
                index: i,
                x: sample.x.clone(),
                y: sample.y,
                model_loss: model.sample_loss(sample, &loss)?,
                human_loss: human_loss(sample, &loss)?,
                decision: decisions[i] as u8,
            },
        )?;
    }

    let sys = system_loss(&decisions, &model, &data, &loss)?;
    let deferred = decisions.iter().filter(|&&d| d).count();
    println!("system loss {sys:.6}");
    println!(
        "deferred {} of {} samples (fraction {:.4})",
        deferred,
        data.len(),
        deferred as f64 / data.len() as f64
    );
    if data.task_kind() == TaskKind::Classification {
        let err = zero_one_error_with_draws(
            &model,
            &data,
            &decisions,
            cfg.seed,
            EVALUATE_DRAW_STREAM,
        )?;
        println!("misclassification error {err:.4}");
    }

    let ratios = triage_ratio_report(&model, &decisions, &data, &loss)?;
    let ratio_path = cfg.out_dir.join("ratio_report.json");
    let mut w = open_writer(&ratio_path)?;
    write_json_line(&mut w, &ratios)?;
    for (name, group) in [("kept", &ratios.kept), ("deferred", &ratios.deferred)] {
        match group {
            None => println!("{name}: group absent"),
            Some(g) => println!(
                "{name}: {} samples, model/human loss ratio median {} ({} with near-zero human loss)",
                g.count,
                g.median.map_or("n/a".to_string(), |m| format!("{m:.4}")),
                g.infinite_count
            ),
        }
    }

    let dg = deferred_gradient_norm(&model, &data, cfg.train.budget, &loss)?;
    let kg = kept_gradient_norm(&model, &data, cfg.train.budget, &loss)?;
    println!("deferred-set mean gradient norm {dg:.3e}");
    println!("kept-set mean gradient norm {kg:.3e}");
    println!("wrote {}, {}", report_path.display(), ratio_path.display());
    Ok(())
}

pub fn four_settings(cfg: &Resolved) -> Result<(), CliError> {
    ensure_out_dir(&cfg.out_dir)?;
    // The experiment needs full-batch steps and a long horizon; take the
    // experiment defaults unless the config file provided a train section.
    let train = if cfg.train_from_file {
        cfg.train.clone()
    } else {
        let mut t = FourSettingsConfig::default().train;
        t.seed = cfg.seed;
        t
    };
    let fs_config = FourSettingsConfig {
        spec: cfg.regression_spec.clone(),
        model: cfg.model.clone().unwrap_or(ModelSpec::Sigmoid1d),
        train,
    };

    let report = run_four_settings(&fs_config)?;
    for setting in SettingId::ALL {
        println!("{} {:.6}", setting.label(), report.loss(setting));
    }
    println!(
        "ordering S4 < S2 < S3 < S1: {}",
        if report.strict_ordering_holds() {
            "holds"
        } else {
            "violated"
        }
    );

    let report_path = cfg.out_dir.join("four_settings.json");
    let mut w = open_writer(&report_path)?;
    write_json_line(&mut w, &report)?;
    let instances_path = cfg.out_dir.join("per_instance.jsonl");
    let mut w = open_writer(&instances_path)?;
    for rec in &report.per_instance {
        write_json_line(&mut w, rec)?;
    }
    println!(
        "wrote {}, {}",
        report_path.display(),
        instances_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum SweepRecord<'a> {
    Header {
        columns: &'a [&'a str],
    },
    Cell(&'a SweepCell),
    Summary {
        method: &'a str,
        budget: f64,
        seeds: usize,
        mean_zero_one_error: Option<f64>,
        se_zero_one_error: Option<f64>,
        mean_system_loss: f64,
        se_system_loss: f64,
        mean_deferred_fraction: f64,
    },
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn sweep(cfg: &Resolved, data_path: Option<&Path>) -> Result<(), CliError> {
    ensure_out_dir(&cfg.out_dir)?;
    let methods: Vec<Method> = cfg
        .sweep
        .methods
        .iter()
        .map(|m| Method::parse(m))
        .collect::<triagekit::Result<_>>()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let budgets = cfg.sweep.budgets.clone();
    let file_data = match data_path {
        Some(p) => Some(Dataset::read_file(p)?),
        None => None,
    };

    let mut cells: Vec<SweepCell> = Vec::new();
    for &seed in &cfg.sweep.seeds {
        let seed = RngSeed(seed);
        let data = match &file_data {
            Some(d) => d.clone(),
            None => match cfg.sweep.data {
                GenerateTask::Regression => {
                    gen_regression(&cfg.regression_spec.clone().with_seed(seed))?
                }
                GenerateTask::Classification => {
                    gen_classification(&cfg.classification_spec.clone().with_seed(seed))?
                }
            },
        };
        let loss = loss_for(&data);
        let model_spec = cfg
            .model
            .clone()
            .unwrap_or_else(|| default_model_spec(&data));
        let (train_set, val_set, test_set) = split_dataset(&data, cfg.split_fractions, seed)?;
        let splits = DataSplits {
            train: train_set,
            val: val_set,
            test: test_set,
        };
        let config = triagekit::train::TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        eprintln!(
            "sweep seed {}: {} methods x {} budgets",
            seed.0,
            methods.len(),
            budgets.len()
        );
        cells.extend(budget_sweep(
            &splits,
            &model_spec,
            &cfg.scorer,
            &config,
            &budgets,
            &methods,
            &loss,
            cfg.sweep.jobs,
        )?);
    }

    // Rows sorted by (method, budget, seed) for a stable table layout.
    cells.sort_by(|a, b| {
        a.method
            .name()
            .cmp(b.method.name())
            .then(a.budget.partial_cmp(&b.budget).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.seed.cmp(&b.seed))
    });

    let results_path = cfg.out_dir.join("sweep.jsonl");
    let mut w = open_writer(&results_path)?;
    write_json_line(
        &mut w,
        &SweepRecord::Header {
            columns: &[
                "method",
                "budget",
                "seed",
                "zero_one_error",
                "system_loss",
                "deferred_fraction",
            ],
        },
    )?;
    for cell in &cells {
        write_json_line(&mut w, &SweepRecord::Cell(cell))?;
    }

    println!(
        "{:<16} {:>6} {:>8} {:>12} {:>10} {:>12} {:>10} {:>10}",
        "method", "budget", "seeds", "mean_01err", "se_01err", "mean_loss", "se_loss", "mean_defer"
    );
    for method in &methods {
        for &budget in &budgets {
            let group: Vec<&SweepCell> = cells
                .iter()
                .filter(|c| c.method == *method && c.budget == budget)
                .collect();
            if group.is_empty() {
                continue;
            }
            let losses: Vec<f64> = group.iter().map(|c| c.system_loss).collect();
            let (mean_loss, se_loss) = mean_and_se(&losses);
            let errors: Option<Vec<f64>> = group
                .iter()
                .map(|c| c.zero_one_error)
                .collect::<Option<Vec<f64>>>();
            let (mean_err, se_err) = match &errors {
                Some(e) => {
                    let (m, s) = mean_and_se(e);
                    (Some(m), Some(s))
                }
                None => (None, None),
            };
            let defer = group.iter().map(|c| c.deferred_fraction).sum::<f64>()
                / group.len() as f64;
            write_json_line(
                &mut w,
                &SweepRecord::Summary {
                    method: method.name(),
                    budget,
                    seeds: group.len(),
                    mean_zero_one_error: mean_err,
                    se_zero_one_error: se_err,
                    mean_system_loss: mean_loss,
                    se_system_loss: se_loss,
                    mean_deferred_fraction: defer,
                },
            )?;
            println!(
                "{:<16} {:>6} {:>8} {:>12} {:>10} {:>12.5} {:>10.5} {:>10.4}",
                method.name(),
                budget,
                group.len(),
                mean_err.map_or("n/a".into(), |v| format!("{v:.4}")),
                se_err.map_or("n/a".into(), |v| format!("{v:.4}")),
                mean_loss,
                se_loss,
                defer
            );
        }
    }
    println!("wrote {}", results_path.display());
    Ok(())
}
