//! Seeded simulation of randomized experiments.
//!
//! Each record carries a covariate (a 32×32 image or a flat vector), a
//! treatment indicator and the observed outcome. The potential outcomes,
//! the effect target and circle geometry are kept in a separate
//! [`HiddenTruth`] that estimators never receive: fitting APIs take
//! [`ObservedData`] and only [`crate::eval`] and the harness read the truth.

mod appendix;
mod circle;
mod file;
mod simple;
pub mod surrogate;

pub use appendix::{gen_appendix, AppendixKind, APPENDIX_DIM, APPENDIX_EFFECT};
pub use circle::{gen_circle, render_circle, Circle, IMAGE_SIDE, INSIDE_VALUE};
pub use file::{dataset_to_string, parse_dataset, read_dataset, read_observed, write_dataset, DATASET_FORMAT_VERSION};
pub use simple::{calibrate_sigma, gen_simple, SimpleGenerator, SimpleModel, SimpleRelation, SIGMA_REFERENCE_N};

use crate::error::{Error, Result};

/// Estimator-facing view of a dataset: covariates, treatment and observed
/// outcome only.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    /// Shape of one covariate, e.g. `[1, 32, 32]` or `[9]`.
    pub covariate_shape: Vec<usize>,
    /// Row-major covariates, `n × dim`.
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

impl ObservedData {
    pub fn new(covariate_shape: Vec<usize>, x: Vec<f64>, t: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let dim: usize = covariate_shape.iter().product();
        if dim == 0 {
            return Err(Error::Data("covariate shape has a zero extent".into()));
        }
        if t.len() != y.len() || x.len() != dim * t.len() {
            return Err(Error::Data(format!(
                "{} covariate values, {} treatments and {} outcomes do not describe records of dimension {dim}",
                x.len(),
                t.len(),
                y.len()
            )));
        }
        if x.iter().chain(&t).chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value in observed data".into()));
        }
        Ok(Self { covariate_shape, x, t, y })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.covariate_shape.iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.x[i * d..][..d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks(self.dim())
    }

    /// Records with the given treatment value.
    pub fn subset(&self, keep: impl Fn(usize) -> bool) -> ObservedData {
        let mut out = ObservedData {
            covariate_shape: self.covariate_shape.clone(),
            x: Vec::new(),
            t: Vec::new(),
            y: Vec::new(),
        };
        for i in (0..self.len()).filter(|&i| keep(i)) {
            out.x.extend_from_slice(self.row(i));
            out.t.push(self.t[i]);
            out.y.push(self.y[i]);
        }
        out
    }
}

/// Ground truth retained for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenTruth {
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    /// Scoring target: the CATE, or the radius substitute for noisy circles.
    pub tau: Vec<f64>,
    /// Circle geometry per record, for circle-image covariates.
    pub circles: Option<Vec<Circle>>,
}

/// Which generator produced a dataset; echoed into dataset files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GeneratorKind {
    CircleNoiseless,
    CircleNoisy,
    Linear,
    Polynomial,
    Tree,
    Net,
    AppendixLinear,
    AppendixPoly,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 8] = [
        GeneratorKind::CircleNoiseless,
        GeneratorKind::CircleNoisy,
        GeneratorKind::Linear,
        GeneratorKind::Polynomial,
        GeneratorKind::Tree,
        GeneratorKind::Net,
        GeneratorKind::AppendixLinear,
        GeneratorKind::AppendixPoly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::CircleNoiseless => "circle-noiseless",
            GeneratorKind::CircleNoisy => "circle-noisy",
            GeneratorKind::Linear => "linear",
            GeneratorKind::Polynomial => "polynomial",
            GeneratorKind::Tree => "tree",
            GeneratorKind::Net => "net",
            GeneratorKind::AppendixLinear => "appendix-linear",
            GeneratorKind::AppendixPoly => "appendix-poly",
        }
    }

    /// Whether the scoring target is the radius substitute rather than the
    /// exact CATE.
    pub fn tau_is_substitute(self) -> bool {
        self == GeneratorKind::CircleNoisy
    }

    pub fn simple(self) -> Option<SimpleGenerator> {
        match self {
            GeneratorKind::Linear => Some(SimpleGenerator::Linear),
            GeneratorKind::Polynomial => Some(SimpleGenerator::Polynomial),
            GeneratorKind::Tree => Some(SimpleGenerator::Tree),
            GeneratorKind::Net => Some(SimpleGenerator::Net),
            _ => None,
        }
    }
}

impl std::fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GeneratorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown generator kind `{s}`")))
    }
}

/// Complete description of a generator; together with `n` it determines a
/// dataset exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    /// Seed for generator structure (coefficients, surrogate models).
    pub structure_seed: u64,
    /// Outcome noise standard deviation for the simple relations. `None`
    /// means calibrate for a signal-to-noise ratio of 10.
    pub sigma: Option<f64>,
    /// Covariate standard deviation for the appendix generators.
    pub sigma_x: f64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind) -> Self {
        let sigma_x = if kind == GeneratorKind::AppendixPoly { 10.0 } else { 1.0 };
        Self {
            kind,
            structure_seed: 5,
            sigma: None,
            sigma_x,
        }
    }

    pub fn describe(&self) -> String {
        let sigma = self.sigma.map_or("auto".to_string(), |s| format!("{s}"));
        format!(
            "kind={} structure_seed={} sigma={sigma} sigma_x={}",
            self.kind, self.structure_seed, self.sigma_x
        )
    }
}

/// A simulated experiment with its hidden truth.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalDataset {
    pub kind: GeneratorKind,
    /// Human-readable generator description echoed into files.
    pub spec: String,
    pub seed: u64,
    observed: ObservedData,
    truth: HiddenTruth,
}

impl CausalDataset {
    pub fn new(
        kind: GeneratorKind,
        spec: String,
        seed: u64,
        observed: ObservedData,
        truth: HiddenTruth,
    ) -> Result<Self> {
        let n = observed.len();
        if truth.y0.len() != n || truth.y1.len() != n || truth.tau.len() != n {
            return Err(Error::Data("hidden truth does not match record count".into()));
        }
        if truth.circles.as_ref().is_some_and(|c| c.len() != n) {
            return Err(Error::Data("circle geometry does not match record count".into()));
        }
        Ok(Self {
            kind,
            spec,
            seed,
            observed,
            truth,
        })
    }

    pub fn observed(&self) -> &ObservedData {
        &self.observed
    }

    /// Ground truth; for scoring only.
    pub fn truth(&self) -> &HiddenTruth {
        &self.truth
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn into_parts(self) -> (ObservedData, HiddenTruth) {
        (self.observed, self.truth)
    }
}

/// Observed outcome from potential outcomes: `T·Y(1) + (1 − T)·Y(0)`.
pub fn observed_outcome(t: f64, y0: f64, y1: f64) -> f64 {
    t * y1 + (1.0 - t) * y0
}
