use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;

use super::tree::{Features, RegressionTree, TreeParams};

const FOREST_FORMAT: &str = "forest v1";

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub trees: usize,
    /// Features tried per split; `None` means ⌈p/3⌉.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            mtry: None,
            min_leaf: 5,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn mtry_for(&self, p: usize) -> usize {
        self.mtry.unwrap_or(p.div_ceil(3)).clamp(1, p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    pub dim: usize,
    pub seed: u64,
    pub mtry: usize,
}

/// Bagged regression trees. Tree `i` draws its bootstrap sample and split
/// candidates from its own stream, so the result does not depend on how
/// the trees are scheduled across threads.
pub fn fit_forest(x: Features<'_>, y: &[f64], cfg: &ForestConfig) -> Result<ForestModel> {
    let n = x.len();
    if n == 0 || y.is_empty() {
        return Err(Error::Data("cannot fit a forest on an empty dataset".into()));
    }
    if y.len() != n {
        return Err(Error::Data(format!("{n} feature rows for {} targets", y.len())));
    }
    if cfg.trees == 0 || cfg.min_leaf == 0 {
        return Err(Error::Config("forest needs at least one tree and a positive leaf size".into()));
    }
    if n < cfg.min_leaf {
        return Err(Error::Data(format!(
            "{n} records is fewer than the minimum leaf size {}",
            cfg.min_leaf
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite forest target".into()));
    }
    let params = TreeParams {
        min_leaf: cfg.min_leaf,
        mtry: cfg.mtry_for(x.dim),
    };
    let trees = (0..cfg.trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(cfg.seed, i as u64);
            let mut sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            RegressionTree::fit(x, y, &mut sample, params, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        dim: x.dim,
        seed: cfg.seed,
        mtry: params.mtry,
    })
}

impl ForestModel {
    /// Arithmetic mean of the tree predictions, summed in tree order.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Data(format!(
                "feature vector of length {} for a forest of dimension {}",
                x.len(),
                self.dim
            )));
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    pub fn predict_rows(&self, x: Features<'_>) -> Result<Vec<f64>> {
        (0..x.len()).into_par_iter().map(|i| self.predict(x.row(i))).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{FOREST_FORMAT}\ntrees {} dim {} seed {} mtry {}\n",
            self.trees.len(),
            self.dim,
            self.seed,
            self.mtry
        );
        for (i, t) in self.trees.iter().enumerate() {
            out.push_str(&format!("tree {i} nodes {}\n", t.nodes.len()));
            t.write(&mut out);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |d: String| Error::format("<forest>", d);
        let mut lines = text.lines();
        if lines.next() != Some(FOREST_FORMAT) {
            return Err(bad(format!("expected `{FOREST_FORMAT}` header")));
        }
        let head = lines.next().ok_or_else(|| bad("missing forest summary line".into()))?;
        let f: Vec<&str> = head.split_whitespace().collect();
        let field = |i: usize, key: &str| -> Result<u64> {
            match (f.get(i), f.get(i + 1)) {
                (Some(&k), Some(v)) if k == key => v.parse().map_err(|_| bad(format!("bad {key} value `{v}`"))),
                _ => Err(bad(format!("expected `{key}` in `{head}`"))),
            }
        };
        let (count, dim, seed, mtry) = (field(0, "trees")?, field(2, "dim")?, field(4, "seed")?, field(6, "mtry")?);
        let dim = dim as usize;
        let mut trees = Vec::with_capacity(count as usize);
        for i in 0..count {
            let h = lines.next().ok_or_else(|| bad(format!("missing tree {i}")))?;
            let nodes: usize = h
                .strip_prefix(&format!("tree {i} nodes "))
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(format!("bad tree header `{h}`")))?;
            let t = RegressionTree::read(&mut lines, dim).map_err(|e| bad(format!("tree {i}: {e}")))?;
            if t.nodes.len() != nodes {
                return Err(bad(format!("tree {i} declares {nodes} nodes, has {}", t.nodes.len())));
            }
            trees.push(t);
        }
        if trees.is_empty() {
            return Err(bad("forest has no trees".into()));
        }
        if let Some(extra) = lines.find(|l| !l.trim().is_empty()) {
            return Err(bad(format!("unexpected trailing line `{extra}`")));
        }
        Ok(ForestModel {
            trees,
            dim,
            seed,
            mtry: mtry as usize,
        })
    }
}
