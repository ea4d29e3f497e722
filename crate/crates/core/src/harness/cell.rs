use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::datagen::{gen_appendix, gen_circle, AppendixKind, CausalDataset, GeneratorKind, SimpleModel};
use crate::error::{Error, Result};
use crate::eval::{mse_cate, relative_mse, scatter_export_as, EvalReport, Split};
use crate::rng;

use super::config::{ExperimentConfig, Method};
use super::models::fit_method;
use super::report::{format_rows, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub generator: GeneratorKind,
    pub method: Method,
    pub n_train: usize,
    pub replicate: u64,
}

impl CellKey {
    /// Stem of the files written for this cell.
    pub fn stem(&self) -> String {
        format!("{}__{}__n{}__r{}", self.generator, self.method, self.n_train, self.replicate)
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.generator, self.method, self.n_train, self.replicate)
    }
}

/// Both report rows of a cell, plus the error message when the method
/// failed.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub train: EvalReport,
    pub test: EvalReport,
    pub error: Option<String>,
}

enum Source {
    Circle { noisy: bool },
    Simple(Box<SimpleModel>),
    Appendix { kind: AppendixKind, sigma_x: f64 },
}

impl Source {
    fn generate(&self, n: usize, seed: u64) -> Result<CausalDataset> {
        match self {
            Source::Circle { noisy } => gen_circle(n, *noisy, seed),
            Source::Simple(m) => m.generate(n, seed),
            Source::Appendix { kind, sigma_x } => gen_appendix(n, *kind, *sigma_x, seed),
        }
    }
}

/// A validated configuration with its generator built and its shared test
/// set drawn.
pub struct Experiment {
    pub config: ExperimentConfig,
    source: Source,
    test: CausalDataset,
}

impl Experiment {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let spec = &config.generator;
        let source = match spec.kind {
            GeneratorKind::CircleNoiseless => Source::Circle { noisy: false },
            GeneratorKind::CircleNoisy => Source::Circle { noisy: true },
            GeneratorKind::AppendixLinear => Source::Appendix {
                kind: AppendixKind::Linear,
                sigma_x: spec.sigma_x,
            },
            GeneratorKind::AppendixPoly => Source::Appendix {
                kind: AppendixKind::Polynomial,
                sigma_x: spec.sigma_x,
            },
            _ => Source::Simple(Box::new(SimpleModel::new(spec)?)),
        };
        let test = source.generate(config.test_size, rng::derive(config.seed, "test-set", 0))?;
        Ok(Self {
            config: config.clone(),
            source,
            test,
        })
    }

    pub fn kind(&self) -> GeneratorKind {
        self.config.generator.kind
    }

    pub fn test_set(&self) -> &CausalDataset {
        &self.test
    }

    /// Training sets of a replicate are nested: the first `n` records are
    /// the same for every size.
    pub fn train_set(&self, n: usize, replicate: u64) -> Result<CausalDataset> {
        self.source.generate(n, rng::derive(self.config.seed, "train-set", replicate))
    }

    /// Every cell of the grid, in key order.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut keys = Vec::new();
        for &method in &self.config.methods {
            for &n_train in &self.config.grid {
                for replicate in 0..self.config.replicates {
                    keys.push(CellKey {
                        generator: self.kind(),
                        method,
                        n_train,
                        replicate,
                    });
                }
            }
        }
        keys.sort();
        keys
    }

    pub fn check_key(&self, key: &CellKey) -> Result<()> {
        let c = &self.config;
        if key.generator != self.kind()
            || !c.methods.contains(&key.method)
            || !c.grid.contains(&key.n_train)
            || key.replicate >= c.replicates
        {
            return Err(Error::Config(format!("cell {key} is not part of this experiment")));
        }
        Ok(())
    }

    pub fn cell_seed(&self, key: &CellKey) -> u64 {
        let per_method = rng::derive(self.config.seed, key.method.name(), key.replicate);
        rng::derive(per_method, "n-train", key.n_train as u64)
    }

    pub fn cell_path(&self, key: &CellKey) -> PathBuf {
        self.config.out_dir.join("cells").join(format!("{}.csv", key.stem()))
    }

    pub fn scatter_path(&self, key: &CellKey, split: Split) -> PathBuf {
        self.config
            .out_dir
            .join("scatter")
            .join(format!("{}__{}.csv", key.stem(), split.name()))
    }

    /// Fits and scores one cell without touching the file system.
    /// On success the second value holds the train estimates, the train
    /// truth and the test estimates.
    pub fn compute_cell(&self, key: &CellKey) -> Result<(CellOutcome, Option<[Vec<f64>; 3]>)> {
        self.check_key(key)?;
        let train = self.train_set(key.n_train, key.replicate)?;
        let started = Instant::now();
        let attempt = || -> Result<[Vec<f64>; 2]> {
            let fitted = fit_method(
                key.method,
                train.observed(),
                self.kind(),
                &self.config.overrides,
                self.cell_seed(key),
            )?;
            let on_train = fitted.cates(train.observed())?;
            let on_test = fitted.cates(self.test.observed())?;
            if on_train.iter().chain(&on_test).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { node: "effect estimate".into() });
            }
            Ok([on_train, on_test])
        };
        let result = attempt();
        let seconds = started.elapsed().as_secs_f64();
        // Relative MSE is undefined (NaN) when the true effect is constant.
        let row = |split: Split, est: Option<&[f64]>, truth: &[f64]| -> Result<EvalReport> {
            let (mse, relative_mse) = match est {
                Some(e) => (mse_cate(e, truth)?, relative_mse(e, truth).unwrap_or(f64::NAN)),
                None => (f64::NAN, f64::NAN),
            };
            Ok(EvalReport {
                method: key.method.name().to_string(),
                generator: self.kind().name().to_string(),
                n_train: key.n_train,
                replicate: key.replicate,
                split,
                mse,
                relative_mse,
                failed: est.is_none(),
                seconds,
            })
        };
        match result {
            Ok(est) => {
                let outcome = CellOutcome {
                    train: row(Split::Train, Some(&est[0]), &train.truth().tau)?,
                    test: row(Split::Test, Some(&est[1]), &self.test.truth().tau)?,
                    error: None,
                };
                let [on_train, on_test] = est;
                Ok((outcome, Some([on_train, train.truth().tau.clone(), on_test])))
            }
            Err(e @ Error::Config(_)) => Err(e),
            Err(e) => {
                let outcome = CellOutcome {
                    train: row(Split::Train, None, &train.truth().tau)?,
                    test: row(Split::Test, None, &self.test.truth().tau)?,
                    error: Some(e.to_string()),
                };
                Ok((outcome, None))
            }
        }
    }

    /// Runs one cell and writes its scatter exports and result file.
    pub fn run_cell(&self, key: &CellKey) -> Result<CellOutcome> {
        let (outcome, est) = self.compute_cell(key)?;
        if let Some([on_train, train_tau, on_test]) = est {
            let target = if self.kind().tau_is_substitute() { "tau_substitute" } else { "true_tau" };
            for (split, e, truth) in [
                (Split::Train, &on_train, &train_tau),
                (Split::Test, &on_test, &self.test.truth().tau),
            ] {
                let path = self.scatter_path(key, split);
                ensure_parent(&path)?;
                scatter_export_as(e, truth, target, &path)?;
            }
        }
        let path = self.cell_path(key);
        ensure_parent(&path)?;
        let mut text = format_rows(&[outcome.train.clone(), outcome.test.clone()]);
        if let Some(err) = &outcome.error {
            text.push_str(&format!("# error: {}\n", err.replace('\n', " ")));
        }
        write_atomic(&path, &text)?;
        Ok(outcome)
    }
}

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

/// Runs a single cell of `config`, writing its files under the output
/// directory, and returns the train and test rows.
pub fn run_cell(config: &ExperimentConfig, key: &CellKey) -> Result<(EvalReport, EvalReport)> {
    let exp = Experiment::new(config)?;
    let out = exp.run_cell(key)?;
    Ok((out.train, out.test))
}
