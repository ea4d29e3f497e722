use rand::seq::index;

use crate::error::{Error, Result};
use crate::hexfloat;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// Records with `x[feature] <= threshold` go left. `right` indexes the
    /// right child; the left child immediately follows its parent.
    Split {
        feature: usize,
        threshold: f64,
        right: usize,
    },
    Leaf {
        value: f64,
        count: usize,
    },
}

/// Regression tree stored as a preorder node list.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub min_leaf: usize,
    pub mtry: usize,
}

/// Row-major feature matrix borrowed by the tree builder.
#[derive(Debug, Clone, Copy)]
pub struct Features<'a> {
    pub data: &'a [f64],
    pub dim: usize,
}

impl<'a> Features<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Data(format!("{} values do not form rows of width {dim}", data.len())));
        }
        Ok(Self { data, dim })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    pub fn row(&self, row: usize) -> &'a [f64] {
        &self.data[row * self.dim..][..self.dim]
    }
}

struct Builder<'a, 'r> {
    x: Features<'a>,
    y: &'a [f64],
    params: TreeParams,
    rng: &'r mut Rng,
    nodes: Vec<TreeNode>,
    scratch: Vec<(f64, f64)>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_, '_> {
    fn leaf(&mut self, idx: &[usize]) {
        let sum: f64 = idx.iter().map(|&i| self.y[i]).sum();
        self.nodes.push(TreeNode::Leaf {
            value: sum / idx.len() as f64,
            count: idx.len(),
        });
    }

    fn grow(&mut self, idx: &mut [usize]) {
        let n = idx.len();
        let min_leaf = self.params.min_leaf;
        let first = self.y[idx[0]];
        if n < 2 * min_leaf || idx.iter().all(|&i| self.y[i] == first) {
            self.leaf(idx);
            return;
        }
        let p = self.x.dim;
        let mut candidates = index::sample(self.rng, p, self.params.mtry.min(p)).into_vec();
        candidates.sort_unstable();

        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<BestSplit> = None;
        for &f in &candidates {
            self.scratch.clear();
            self.scratch.extend(idx.iter().map(|&i| (self.x.at(i, f), self.y[i])));
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let pairs = &self.scratch;
            if pairs[0].0 == pairs[n - 1].0 {
                continue;
            }
            let mut left = 0.0;
            for k in 0..n - 1 {
                left += pairs[k].1;
                let nl = k + 1;
                if nl < min_leaf || n - nl < min_leaf || pairs[k].0 == pairs[k + 1].0 {
                    continue;
                }
                let right = total - left;
                let gain = left * left / nl as f64 + right * right / (n - nl) as f64 - parent;
                // Strict improvement keeps the lowest feature, then lowest threshold, on ties.
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        threshold: 0.5 * (pairs[k].0 + pairs[k + 1].0),
                    });
                }
            }
        }
        let Some(split) = best.filter(|b| b.gain > 0.0) else {
            self.leaf(idx);
            return;
        };
        let (feature, threshold) = (split.feature, split.threshold);
        let mut mid = 0;
        for k in 0..n {
            if self.x.at(idx[k], feature) <= threshold {
                idx.swap(k, mid);
                mid += 1;
            }
        }
        let me = self.nodes.len();
        self.nodes.push(TreeNode::Split {
            feature,
            threshold,
            right: 0,
        });
        let (l, r) = idx.split_at_mut(mid);
        self.grow(l);
        let right_at = self.nodes.len();
        if let TreeNode::Split { right, .. } = &mut self.nodes[me] {
            *right = right_at;
        }
        self.grow(r);
    }
}

impl RegressionTree {
    /// Greedy variance-reduction tree on the records listed in `sample`
    /// (duplicates allowed, as from a bootstrap draw).
    pub(crate) fn fit(x: Features<'_>, y: &[f64], sample: &mut [usize], params: TreeParams, rng: &mut Rng) -> Self {
        assert!(!sample.is_empty());
        let mut b = Builder {
            x,
            y,
            params,
            rng,
            nodes: Vec::new(),
            scratch: Vec::with_capacity(sample.len()),
        };
        b.grow(sample);
        RegressionTree { nodes: b.nodes }
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { .. } => return at,
                TreeNode::Split { feature, threshold, right } => {
                    at = if x[feature] <= threshold { at + 1 } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            TreeNode::Leaf { value, .. } => value,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            TreeNode::Leaf { value, count } => Some((value, count)),
            TreeNode::Split { .. } => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &RegressionTree, at: usize) -> usize {
            match t.nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { right, .. } => 1 + walk(t, at + 1).max(walk(t, right)),
            }
        }
        walk(self, 0)
    }

    /// Appends one line per node in preorder: `S <feature> <threshold>` or
    /// `L <value> <count>`, floats in hexadecimal.
    pub(crate) fn write(&self, out: &mut String) {
        for node in &self.nodes {
            match *node {
                TreeNode::Split { feature, threshold, .. } => {
                    out.push_str(&format!("S {feature} {}\n", hexfloat::format(threshold)));
                }
                TreeNode::Leaf { value, count } => {
                    out.push_str(&format!("L {} {count}\n", hexfloat::format(value)));
                }
            }
        }
    }

    /// Reads a preorder node list (as written by [`RegressionTree::write`]).
    pub(crate) fn read<'a>(lines: &mut impl Iterator<Item = &'a str>, dim: usize) -> std::result::Result<Self, String> {
        fn node<'a>(
            lines: &mut impl Iterator<Item = &'a str>,
            dim: usize,
            out: &mut Vec<TreeNode>,
        ) -> std::result::Result<(), String> {
            let line = lines.next().ok_or("tree truncated: missing node")?;
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some("S"), Some(f), Some(t), None) => {
                    let feature: usize = f.parse().map_err(|_| format!("bad feature index `{f}`"))?;
                    if feature >= dim {
                        return Err(format!("feature {feature} out of range for dimension {dim}"));
                    }
                    let threshold = hexfloat::parse(t).ok_or_else(|| format!("bad threshold `{t}`"))?;
                    let me = out.len();
                    out.push(TreeNode::Split { feature, threshold, right: 0 });
                    node(lines, dim, out)?;
                    let right_at = out.len();
                    if let TreeNode::Split { right, .. } = &mut out[me] {
                        *right = right_at;
                    }
                    node(lines, dim, out)
                }
                (Some("L"), Some(v), Some(c), None) => {
                    let value = hexfloat::parse(v).ok_or_else(|| format!("bad leaf value `{v}`"))?;
                    let count = c.parse().map_err(|_| format!("bad leaf count `{c}`"))?;
                    out.push(TreeNode::Leaf { value, count });
                    Ok(())
                }
                _ => Err(format!("unrecognized tree node line `{line}`")),
            }
        }
        let mut nodes = Vec::new();
        node(lines, dim, &mut nodes)?;
        Ok(RegressionTree { nodes })
    }
}
