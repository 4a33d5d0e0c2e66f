//! Synthetic benchmarks: the piecewise-sigmoid regression task with
//! heteroscedastic expert noise, and a Gaussian-blob classification task
//! with simulated expert committees.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{stream_tags, Dataset, RngSeed, Sample, TaskKind};
use crate::error::{Error, Result};
use crate::model::sigmoid;

/// Regression benchmark: features uniform on an interval split into four
/// regions; targets follow one of two sigmoid generators per region; each
/// human prediction is the target plus region-dependent Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressionSpec {
    pub n: usize,
    pub x_range: (f64, f64),
    /// Interior region boundaries; regions are half-open on the left,
    /// closed at the top of the range.
    pub boundaries: [f64; 3],
    /// Sigmoid steepness of the generating function per region.
    pub generator_thetas: [f64; 4],
    /// Variance of the expert noise per region.
    pub noise_variances: [f64; 4],
    /// Independent human predictions drawn per sample.
    pub replicate_humans: usize,
    pub seed: RngSeed,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        RegressionSpec {
            n: 72,
            x_range: (-3.0, 3.0),
            boundaries: [-1.5, 0.0, 1.5],
            generator_thetas: [1.0, 5.0, 1.0, 5.0],
            noise_variances: [8e-3, 1e-3, 4e-3, 2e-3],
            replicate_humans: 1,
            seed: RngSeed(0),
        }
    }
}

impl RegressionSpec {
    pub fn with_seed(mut self, seed: RngSeed) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be >= 1".into()));
        }
        if self.replicate_humans == 0 {
            return Err(Error::InvalidConfig("replicate_humans must be >= 1".into()));
        }
        if self.x_range.0.is_nan() || self.x_range.1.is_nan() || self.x_range.0 >= self.x_range.1 {
            return Err(Error::InvalidConfig(format!(
                "x_range must be increasing, got {:?}",
                self.x_range
            )));
        }
        let b = &self.boundaries;
        if !(self.x_range.0 < b[0] && b[0] < b[1] && b[1] < b[2] && b[2] < self.x_range.1) {
            return Err(Error::InvalidConfig(format!(
                "boundaries {:?} must be strictly inside {:?} and increasing",
                b, self.x_range
            )));
        }
        if self.noise_variances.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidConfig(
                "noise variances must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Region index of a feature value. Regions are `[lo, b0)`, `[b0, b1)`,
    /// `[b1, b2)`, and `[b2, hi]`; the closed upper endpoint belongs to the
    /// last region.
    pub fn region_of(&self, x: f64) -> usize {
        if x < self.boundaries[0] {
            0
        } else if x < self.boundaries[1] {
            1
        } else if x < self.boundaries[2] {
            2
        } else {
            3
        }
    }

    /// Noiseless target at a feature value.
    pub fn target(&self, x: f64) -> f64 {
        sigmoid(self.generator_thetas[self.region_of(x)] * x)
    }
}

/// Draws the regression dataset. Sampling is over the half-open interval
/// `[lo, hi)`; the closed endpoint of the last region has measure zero under
/// the uniform draw.
pub fn gen_regression(spec: &RegressionSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = spec.seed.stream(stream_tags::SYNTH_REGRESSION);
    let mut samples = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let x = rng.random_range(spec.x_range.0..spec.x_range.1);
        let y = spec.target(x);
        let variance = spec.noise_variances[spec.region_of(x)];
        let h: Vec<f64> = if variance == 0.0 {
            vec![y; spec.replicate_humans]
        } else {
            let normal = Normal::new(0.0, variance.sqrt())
                .map_err(|e| Error::InvalidConfig(format!("bad noise spec: {e}")))?;
            (0..spec.replicate_humans)
                .map(|_| y + normal.sample(&mut rng))
                .collect()
        };
        samples.push(Sample::regression(vec![x], y, h));
    }
    Dataset::new(samples, TaskKind::Regression, None)
}

/// Classification benchmark: Gaussian blobs, one per class, with an expert
/// committee whose per-class confusion rates vary across the feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassificationSpec {
    pub n: usize,
    pub dim: usize,
    pub classes: usize,
    /// Blob centers, one per class.
    pub centers: Vec<Vec<f64>>,
    /// Isotropic standard deviation per class.
    pub stddevs: Vec<f64>,
    /// Committee size: human predictions per sample.
    pub committee_size: usize,
    /// Probability that one expert vote is wrong, per true class.
    pub confusion: Vec<f64>,
    pub seed: RngSeed,
}

impl Default for ClassificationSpec {
    fn default() -> Self {
        // Class 1 is a tight blob nested inside the wide class-0 blob, so a
        // linear decision boundary cannot carve it out without damaging
        // class 0. The expert committee is sharp exactly on the nested blob
        // and weak on the wide one, which is where a capacity-limited model
        // can shine.
        ClassificationSpec {
            n: 600,
            dim: 2,
            classes: 3,
            centers: vec![vec![0.0, 0.0], vec![1.5, 0.0], vec![-3.5, 0.0]],
            stddevs: vec![2.2, 0.35, 0.6],
            committee_size: 10,
            confusion: vec![0.45, 0.03, 0.1],
            seed: RngSeed(0),
        }
    }
}

impl ClassificationSpec {
    pub fn with_seed(mut self, seed: RngSeed) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.dim == 0 {
            return Err(Error::InvalidConfig("n and dim must be >= 1".into()));
        }
        if self.classes < 2 {
            return Err(Error::InvalidConfig("classes must be >= 2".into()));
        }
        if self.committee_size == 0 {
            return Err(Error::InvalidConfig("committee_size must be >= 1".into()));
        }
        if self.centers.len() != self.classes
            || self.stddevs.len() != self.classes
            || self.confusion.len() != self.classes
        {
            return Err(Error::InvalidConfig(
                "centers, stddevs and confusion must have one entry per class".into(),
            ));
        }
        if self.centers.iter().any(|c| c.len() != self.dim) {
            return Err(Error::InvalidConfig("center dimension mismatch".into()));
        }
        if self.confusion.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
            return Err(Error::InvalidConfig(
                "confusion rates must lie in [0, 1]".into(),
            ));
        }
        if self.stddevs.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidConfig("stddevs must be positive".into()));
        }
        Ok(())
    }
}

/// Draws the classification dataset. Each expert votes the true class with
/// probability `1 - confusion[class]` and otherwise a uniformly random wrong
/// class.
pub fn gen_classification(spec: &ClassificationSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = spec.seed.stream(stream_tags::SYNTH_CLASSIFICATION);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut samples = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let class = rng.random_range(0..spec.classes);
        let x: Vec<f64> = (0..spec.dim)
            .map(|j| spec.centers[class][j] + spec.stddevs[class] * normal.sample(&mut rng))
            .collect();
        let rate = spec.confusion[class];
        let votes: Vec<usize> = (0..spec.committee_size)
            .map(|_| {
                if rng.random_range(0.0..1.0) < rate {
                    let wrong = rng.random_range(0..spec.classes - 1);
                    if wrong >= class {
                        wrong + 1
                    } else {
                        wrong
                    }
                } else {
                    class
                }
            })
            .collect();
        samples.push(Sample::classification(x, class, votes));
    }
    Dataset::new(samples, TaskKind::Classification, Some(spec.classes))
}
