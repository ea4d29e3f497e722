use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baselines::ForestConfig;
use crate::causalnet::OptimizerKind;
use crate::datagen::{GeneratorKind, GeneratorSpec};
use crate::error::{Error, Result};

/// Training sizes, test size and replicate count used when nothing else is
/// configured. Small enough to run on a laptop.
pub const DESK_GRID: [usize; 3] = [500, 1000, 2000];
pub const DESK_TEST_SIZE: usize = 2000;
/// The full-scale protocol behind `--full-scale`.
pub const FULL_GRID: [usize; 5] = [2000, 4000, 6000, 8000, 10000];
pub const FULL_TEST_SIZE: usize = 10000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    CausalNet,
    SForest,
    TForest,
    Adj,
    AdjInteraction,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::CausalNet,
        Method::SForest,
        Method::TForest,
        Method::Adj,
        Method::AdjInteraction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::CausalNet => "causalnet",
            Method::SForest => "s-forest",
            Method::TForest => "t-forest",
            Method::Adj => "adj",
            Method::AdjInteraction => "adj-interaction",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Per-method hyperparameters. Unset CausalNet fields keep the
/// [`TrainConfig`](crate::causalnet::TrainConfig) defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Overrides {
    pub net_optimizer: OptimizerKind,
    pub net_lr: f64,
    pub net_batch_size: usize,
    pub net_epochs: usize,
    /// `None` standardizes the outcome for every generator except the
    /// circle images.
    pub net_standardize: Option<bool>,
    pub forest_trees: usize,
    pub forest_min_leaf: usize,
    pub forest_mtry: Option<usize>,
}

impl Default for Overrides {
    fn default() -> Self {
        let net = crate::causalnet::TrainConfig::default();
        let forest = ForestConfig::default();
        Self {
            net_optimizer: net.optimizer,
            net_lr: net.lr,
            net_batch_size: net.batch_size,
            net_epochs: net.epochs,
            net_standardize: None,
            forest_trees: forest.trees,
            forest_min_leaf: forest.min_leaf,
            forest_mtry: forest.mtry,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub generator: GeneratorSpec,
    pub methods: Vec<Method>,
    pub grid: Vec<usize>,
    pub test_size: usize,
    pub replicates: u64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub overrides: Overrides,
}

impl ExperimentConfig {
    pub fn new(kind: GeneratorKind) -> Self {
        Self {
            generator: GeneratorSpec::new(kind),
            methods: Method::ALL.to_vec(),
            grid: DESK_GRID.to_vec(),
            test_size: DESK_TEST_SIZE,
            replicates: 1,
            seed: 0,
            out_dir: PathBuf::from("results"),
            jobs: 1,
            overrides: Overrides::default(),
        }
    }

    pub fn full_scale(mut self) -> Self {
        self.grid = FULL_GRID.to_vec();
        self.test_size = FULL_TEST_SIZE;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::Config("method list has duplicates".into()));
        }
        if self.grid.is_empty() || self.grid.contains(&0) {
            return Err(Error::Config("training grid must be nonempty with positive sizes".into()));
        }
        if self.test_size < 2 {
            return Err(Error::Config("test size must be at least 2".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("at least one replicate is required".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("job count must be positive".into()));
        }
        let o = &self.overrides;
        if !(o.net_lr.is_finite() && o.net_lr > 0.0) || o.net_batch_size < 2 || o.net_epochs == 0 {
            return Err(Error::Config("invalid causalnet training overrides".into()));
        }
        if o.forest_trees == 0 || o.forest_min_leaf == 0 || o.forest_mtry == Some(0) {
            return Err(Error::Config("invalid forest overrides".into()));
        }
        Ok(())
    }

    /// Reads a line-oriented `key = value` file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::new(GeneratorKind::CircleNoiseless);
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        // The generator resets spec defaults, so apply it first.
        if let Some((_, v)) = pairs.iter().find(|(k, _)| k == "generator") {
            cfg.generator = GeneratorSpec::new(v.parse()?);
        }
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
        }
        let o = &mut self.overrides;
        match key {
            "generator" => {
                let kind: GeneratorKind = value.parse()?;
                if kind != self.generator.kind {
                    self.generator = GeneratorSpec::new(kind);
                }
            }
            "structure_seed" => self.generator.structure_seed = num(key, value)?,
            "sigma" => {
                self.generator.sigma = match value {
                    "auto" => None,
                    v => Some(num(key, v)?),
                }
            }
            "sigma_x" => self.generator.sigma_x = num(key, value)?,
            "methods" => self.methods = parse_list(value)?,
            "grid" => self.grid = parse_list(value)?,
            "test_size" => self.test_size = num(key, value)?,
            "replicates" => self.replicates = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out" | "out_dir" => self.out_dir = PathBuf::from(value),
            "jobs" => self.jobs = num(key, value)?,
            "causalnet.optimizer" => {
                o.net_optimizer = match value {
                    "sgd" => OptimizerKind::Sgd,
                    "adam" => OptimizerKind::Adam,
                    v => return Err(Error::Config(format!("unknown optimizer `{v}`"))),
                }
            }
            "causalnet.lr" => o.net_lr = num(key, value)?,
            "causalnet.batch_size" => o.net_batch_size = num(key, value)?,
            "causalnet.epochs" => o.net_epochs = num(key, value)?,
            "causalnet.standardize_target" => {
                o.net_standardize = match value {
                    "auto" => None,
                    v => Some(num(key, v)?),
                }
            }
            "forest.trees" => o.forest_trees = num(key, value)?,
            "forest.min_leaf" => o.forest_min_leaf = num(key, value)?,
            "forest.mtry" => {
                o.forest_mtry = match value {
                    "auto" => None,
                    v => Some(num(key, v)?),
                }
            }
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }
}

/// Parses a comma-separated list, ignoring blanks around items.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| Error::Config(format!("bad list item `{p}`"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_config_file_text() {
        let cfg = ExperimentConfig::parse(
            "# desk run\n\
             generator = linear\n\
             sigma = 0\n\
             methods = adj, causalnet\n\
             grid = 100,200\n\
             seed = 7\n\
             causalnet.epochs = 3\n\
             forest.mtry = auto\n",
        )
        .unwrap();
        assert_eq!(cfg.generator.kind, GeneratorKind::Linear);
        assert_eq!(cfg.generator.sigma, Some(0.0));
        assert_eq!(cfg.methods, vec![Method::Adj, Method::CausalNet]);
        assert_eq!(cfg.grid, vec![100, 200]);
        assert_eq!(cfg.overrides.net_epochs, 3);
        assert_eq!(cfg.test_size, DESK_TEST_SIZE);
    }

    #[test]
    fn rejects_unknown_names() {
        assert!(ExperimentConfig::parse("methods = adj, lasso").is_err());
        assert!(ExperimentConfig::parse("colour = blue").is_err());
        assert!(ExperimentConfig::parse("generator = mnist").is_err());
        assert!(ExperimentConfig::parse("grid").is_err());
        assert!(ExperimentConfig::parse("grid = 0").is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
    }
}
