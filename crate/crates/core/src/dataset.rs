//! Samples, datasets, deterministic seeding, splitting, and the on-disk
//! dataset format.
//!
//! A dataset file is line-delimited JSON. The first line is a header record
//! declaring `task_kind`, the feature dimension `d`, and (for classification)
//! the number of classes `k`. Every following line is one sample with fields
//! `x` (array of reals), `y` (real for regression, class index for
//! classification) and `h` (nonempty array of human predictions).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seed for all randomized operations. Identical seed plus identical
/// configuration yields bit-identical outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// Derives an independent RNG for a named purpose. Streams with different
    /// tags never overlap, so one seed can drive several generators without
    /// coupling their draws.
    pub fn stream(self, tag: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(tag);
        rng
    }
}

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        RngSeed(seed)
    }
}

/// Stream tags used by this crate; kept in one place so no two call sites
/// reuse a tag by accident.
pub(crate) mod stream_tags {
    pub const SPLIT: u64 = 1;
    pub const SYNTH_REGRESSION: u64 = 2;
    pub const SYNTH_CLASSIFICATION: u64 = 3;
    pub const MODEL_INIT: u64 = 4;
    pub const SCORER_INIT: u64 = 5;
    pub const TEST_HUMAN_DRAW: u64 = 6;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Classification,
}

/// A target or human prediction: a real value for regression, a class index
/// for classification. Serialized as a bare JSON number, so integer-looking
/// values parse as class labels and anything fractional as reals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Label(usize),
    Real(f64),
}

impl Target {
    pub fn as_real(&self) -> Result<f64> {
        match self {
            Target::Real(v) => Ok(*v),
            Target::Label(_) => Err(Error::UnsupportedTask(
                "expected a real-valued target, got a class label".into(),
            )),
        }
    }

    pub fn as_label(&self) -> Result<usize> {
        match self {
            Target::Label(c) => Ok(*c),
            Target::Real(_) => Err(Error::UnsupportedTask(
                "expected a class label, got a real-valued target".into(),
            )),
        }
    }
}

/// One instance: features, ground-truth target, and at least one human
/// prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Target,
    pub h: Vec<Target>,
}

impl Sample {
    pub fn regression(x: Vec<f64>, y: f64, h: Vec<f64>) -> Self {
        Sample {
            x,
            y: Target::Real(y),
            h: h.into_iter().map(Target::Real).collect(),
        }
    }

    pub fn classification(x: Vec<f64>, y: usize, h: Vec<usize>) -> Self {
        Sample {
            x,
            y: Target::Label(y),
            h: h.into_iter().map(Target::Label).collect(),
        }
    }
}

/// An owned collection of samples sharing one task kind and feature
/// dimension. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<Sample>,
    task_kind: TaskKind,
    /// Number of classes; present only for classification.
    num_classes: Option<usize>,
}

impl Dataset {
    pub fn new(
        samples: Vec<Sample>,
        task_kind: TaskKind,
        num_classes: Option<usize>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("dataset has no samples"));
        }
        match task_kind {
            TaskKind::Regression => {
                if num_classes.is_some() {
                    return Err(Error::InvalidConfig(
                        "num_classes is only valid for classification".into(),
                    ));
                }
            }
            TaskKind::Classification => {
                let k = num_classes.ok_or_else(|| {
                    Error::InvalidConfig("classification dataset needs num_classes".into())
                })?;
                if k < 2 {
                    return Err(Error::InvalidConfig(format!(
                        "num_classes must be at least 2, got {k}"
                    )));
                }
            }
        }
        let d = samples[0].x.len();
        if d == 0 {
            return Err(Error::InvalidData("feature dimension must be >= 1".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: s.x.len(),
                });
            }
            if s.h.is_empty() {
                return Err(Error::InvalidData(format!(
                    "sample {i} has no human predictions"
                )));
            }
            match task_kind {
                TaskKind::Regression => {
                    s.y.as_real()?;
                    for v in &s.h {
                        v.as_real()?;
                    }
                }
                TaskKind::Classification => {
                    let k = num_classes.unwrap();
                    let y = s.y.as_label()?;
                    if y >= k {
                        return Err(Error::InvalidData(format!(
                            "sample {i}: label {y} out of range for {k} classes"
                        )));
                    }
                    for v in &s.h {
                        let c = v.as_label()?;
                        if c >= k {
                            return Err(Error::InvalidData(format!(
                                "sample {i}: human label {c} out of range for {k} classes"
                            )));
                        }
                    }
                }
            }
        }
        Ok(Dataset {
            samples,
            task_kind,
            num_classes,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task_kind
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    /// Feature dimension shared by every sample.
    pub fn dim(&self) -> usize {
        self.samples[0].x.len()
    }

    /// A new dataset containing the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidData(format!("index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(samples, self.task_kind, self.num_classes)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let header = DatasetHeader {
            task_kind: self.task_kind,
            d: self.dim(),
            k: self.num_classes,
        };
        writeln!(w, "{}", serde_json::to_string(&header).map_err(json_err)?)?;
        for s in &self.samples {
            writeln!(w, "{}", serde_json::to_string(s).map_err(json_err)?)?;
        }
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Dataset> {
        let file = File::open(path)?;
        Self::read_from(BufReader::new(file))
    }

    pub fn read_from(r: impl BufRead) -> Result<Dataset> {
        let mut lines = r.lines();
        let header_line = lines
            .next()
            .ok_or(Error::EmptyInput("dataset file has no header record"))??;
        let header: DatasetHeader = serde_json::from_str(&header_line)
            .map_err(|e| Error::Parse(format!("bad dataset header: {e}")))?;
        let mut samples = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let s: Sample = serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("bad sample on line {}: {e}", lineno + 2)))?;
            if s.x.len() != header.d {
                return Err(Error::DimensionMismatch {
                    expected: header.d,
                    got: s.x.len(),
                });
            }
            samples.push(s);
        }
        Dataset::new(samples, header.task_kind, header.k)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    task_kind: TaskKind,
    d: usize,
    k: Option<usize>,
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Splits a dataset into disjoint train/validation/test partitions.
///
/// Partition sizes are `floor(fraction * n)` for validation and test; the
/// integer remainder goes to the training partition. The shuffle is
/// deterministic under `seed`.
pub fn split_dataset(
    data: &Dataset,
    fractions: (f64, f64, f64),
    seed: RngSeed,
) -> Result<(Dataset, Dataset, Dataset)> {
    let (f_train, f_val, f_test) = fractions;
    for f in [f_train, f_val, f_test] {
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "split fractions must be positive, got {fractions:?}"
            )));
        }
    }
    if (f_train + f_val + f_test - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "split fractions must sum to 1, got {fractions:?}"
        )));
    }
    let n = data.len();
    if n < 3 {
        return Err(Error::InvalidData(format!(
            "dataset too small to split: {n} samples"
        )));
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = seed.stream(stream_tags::SPLIT);
    indices.shuffle(&mut rng);

    let val_n = (f_val * n as f64).floor() as usize;
    let test_n = (f_test * n as f64).floor() as usize;
    let train_n = n - val_n - test_n;

    let train = data.subset(&indices[..train_n])?;
    let val = data.subset(&indices[train_n..train_n + val_n])?;
    let test = data.subset(&indices[train_n + val_n..])?;
    Ok((train, val, test))
}
