//! The causal network: a convolutional trunk, the [`crate::diverter`], two
//! branch blocks and an additive merge, trained on the observed outcome.
//!
//! ```text
//! x ─ conv3×3(8) relu bn pool2 ─ conv3×3(16) relu bn pool2 flatten dense(32) = f
//! (f, t) ─ diverter ─┬ control ─ dense(16) relu dense(1) ─┐
//!                    └ treated ─ dense(16) relu dense(1) ─┴ + = ŷ
//! ```
//!
//! The effect estimate is `ŷ(x, 1) − ŷ(x, 0)`.

mod checkpoint;
mod train;

pub use checkpoint::{checkpoint_to_string, load_checkpoint, parse_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use train::{train, LossTrace, OptimizerKind, TrainConfig};

use rand::Rng as _;

use crate::diverter;
use crate::error::{Error, Result};
use crate::numerics::{glorot_uniform, Mode, NetworkGraph, NodeId, PoolMode, Tensor};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputShape {
    Image { channels: usize, height: usize, width: usize },
    Flat(usize),
}

impl InputShape {
    pub fn numel(self) -> usize {
        match self {
            InputShape::Image { channels, height, width } => channels * height * width,
            InputShape::Flat(p) => p,
        }
    }

    fn batched(self, n: usize) -> Vec<usize> {
        match self {
            InputShape::Image { channels, height, width } => vec![n, channels, height, width],
            InputShape::Flat(p) => vec![n, p],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalNetConfig {
    pub input: InputShape,
    /// Output channels of the input block and the shared block convolutions.
    pub conv_channels: [usize; 2],
    pub diverter_width: usize,
    pub branch_hidden: usize,
    /// Multiplies covariates on entry; 1/255 for pixel inputs.
    pub input_scale: f64,
    pub seed: u64,
}

impl CausalNetConfig {
    /// 1×32×32 images with the default widths.
    pub fn image(seed: u64) -> Self {
        Self {
            input: InputShape::Image {
                channels: 1,
                height: 32,
                width: 32,
            },
            conv_channels: [8, 16],
            diverter_width: 32,
            branch_hidden: 16,
            input_scale: 1.0 / 255.0,
            seed,
        }
    }

    pub fn flat(p: usize, seed: u64) -> Self {
        Self {
            input: InputShape::Flat(p),
            input_scale: 1.0,
            ..Self::image(seed)
        }
    }

    fn validate(&self) -> Result<()> {
        let widths = [self.conv_channels[0], self.conv_channels[1], self.diverter_width, self.branch_hidden];
        if widths.contains(&0) || self.input.numel() == 0 {
            return Err(Error::Config("all network widths must be positive".into()));
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return Err(Error::Config(format!("input scale must be positive, got {}", self.input_scale)));
        }
        if let InputShape::Image { height, width, .. } = self.input {
            let ok = |s: usize| s >= 3 && (s - 2).is_multiple_of(2) && (s - 2) / 2 >= 4;
            if !ok(height) || !ok(width) {
                return Err(Error::Config(format!(
                    "image {height}×{width} is incompatible with the pooling layout: the first 2×2 pool needs an even extent after the 3×3 convolution, and the second block needs at least 4"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Heads {
    /// `ŷ`, `[n, 1]`.
    pred: NodeId,
    loss: NodeId,
}

/// A built causal network plus the target standardization used in training.
#[derive(Debug, Clone)]
pub struct CausalNet {
    pub config: CausalNetConfig,
    graph: NetworkGraph,
    heads: Heads,
    /// Predictions are `target_shift + target_scale · ŷ`.
    pub target_shift: f64,
    pub target_scale: f64,
}

struct Init<'a> {
    g: &'a mut NetworkGraph,
    rng: rng::Rng,
}

impl Init<'_> {
    fn dense(&mut self, x: NodeId, name: &str, inp: usize, out: usize, bias: bool) -> Result<NodeId> {
        let w = glorot_uniform(&[out, inp], inp, out, &mut self.rng);
        let w = self.g.param(&format!("{name}.weight"), w)?;
        let b = if bias {
            Some(self.g.param(&format!("{name}.bias"), Tensor::zeros(vec![out]))?)
        } else {
            None
        };
        self.g.dense(x, w, b)
    }

    fn conv(&mut self, x: NodeId, name: &str, inp: usize, out: usize) -> Result<NodeId> {
        let w = glorot_uniform(&[out, inp, 3, 3], inp * 9, out * 9, &mut self.rng);
        let w = self.g.param(&format!("{name}.weight"), w)?;
        let b = self.g.param(&format!("{name}.bias"), Tensor::zeros(vec![out]))?;
        self.g.conv2d(x, w, b)
    }

    fn norm(&mut self, x: NodeId, name: &str, width: usize) -> Result<NodeId> {
        let gamma = self.g.param(&format!("{name}.gamma"), Tensor::full(vec![width], 1.0))?;
        let beta = self.g.param(&format!("{name}.beta"), Tensor::zeros(vec![width]))?;
        self.g.batchnorm(x, gamma, beta, name)
    }

    fn branch(&mut self, x: NodeId, name: &str, width: usize, hidden: usize) -> Result<NodeId> {
        let h = self.dense(x, &format!("{name}.hidden"), width, hidden, true)?;
        let h = self.g.relu(h)?;
        self.dense(h, &format!("{name}.out"), hidden, 1, true)
    }
}

/// Builds the network with seeded Glorot-uniform weights, zero biases and
/// unit batchnorm scales. Inputs: `x` (`[n, c, h, w]` or `[n, p]`), `t`
/// (`[n]`) and, for the loss, `y` (`[n, 1]`).
pub fn build_causalnet(config: &CausalNetConfig) -> Result<CausalNet> {
    config.validate()?;
    let mut g = NetworkGraph::new();
    let x = g.input("x");
    let t = g.input("t");
    let y = g.input("y");
    let width = config.diverter_width;
    let mut init = Init {
        g: &mut g,
        rng: rng::stream(config.seed, 0),
    };
    let scaled = init.g.affine(x, config.input_scale, 0.0)?;
    let f = match config.input {
        InputShape::Image { channels, height, width: w } => {
            let [c1, c2] = config.conv_channels;
            let h = init.conv(scaled, "input.conv", channels, c1)?;
            let h = init.g.relu(h)?;
            let h = init.norm(h, "input.bn", c1)?;
            let h = init.g.maxpool2d(h, 2, PoolMode::Exact)?;
            let h = init.conv(h, "shared.conv", c1, c2)?;
            let h = init.g.relu(h)?;
            let h = init.norm(h, "shared.bn", c2)?;
            let h = init.g.maxpool2d(h, 2, PoolMode::Floor)?;
            let h = init.g.flatten(h)?;
            let side = |s: usize| ((s - 2) / 2 - 2) / 2;
            init.dense(h, "shared.dense", c2 * side(height) * side(w), width, true)?
        }
        InputShape::Flat(p) => {
            // A bias here would be cancelled by the batchnorm that follows.
            let h = init.dense(scaled, "input.dense", p, width, false)?;
            init.norm(h, "input.bn", width)?
        }
    };
    init.g.label(f, "f");
    let (control, treated) = diverter::build_split(init.g, f, t)?;
    let gc = init.branch(control, "branch_c", width, config.branch_hidden)?;
    let gt = init.branch(treated, "branch_t", width, config.branch_hidden)?;
    let pred = diverter::build_merge(init.g, gc, gt)?;
    let loss = init.g.mse_loss(pred, y)?;
    g.set_output(loss)?;
    Ok(CausalNet {
        config: config.clone(),
        graph: g,
        heads: Heads { pred, loss },
        target_shift: 0.0,
        target_scale: 1.0,
    })
}

const PREDICT_CHUNK: usize = 256;

impl CausalNet {
    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut NetworkGraph {
        &mut self.graph
    }

    pub fn param_count(&self) -> usize {
        self.graph.param_count()
    }

    pub fn pred_node(&self) -> NodeId {
        self.heads.pred
    }

    pub fn loss_node(&self) -> NodeId {
        self.heads.loss
    }

    pub fn input_dim(&self) -> usize {
        self.config.input.numel()
    }

    /// Covariates of `n` records as the network's `x` tensor.
    pub fn input_tensor(&self, rows: &[f64]) -> Result<Tensor> {
        let d = self.input_dim();
        if rows.is_empty() || !rows.len().is_multiple_of(d) {
            return Err(Error::shape(
                "x",
                format!("{} covariate values for records of dimension {d}", rows.len()),
            ));
        }
        Tensor::new(self.config.input.batched(rows.len() / d), rows.to_vec())
    }

    /// `ŷ(xᵢ, tᵢ)` for row-major covariates `rows`, batchnorm in inference
    /// mode.
    pub fn predict_outcomes(&self, rows: &[f64], t: &[f64]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        if rows.len() != t.len() * d {
            return Err(Error::shape(
                "x",
                format!("{} covariate values for {} records of dimension {d}", rows.len(), t.len()),
            ));
        }
        let mut g = self.graph.clone();
        let mut out = Vec::with_capacity(t.len());
        for (xs, ts) in rows.chunks(PREDICT_CHUNK * d).zip(t.chunks(PREDICT_CHUNK)) {
            let x = self.input_tensor(xs)?;
            let tt = Tensor::vector(ts.to_vec())?;
            let y = g.forward_node(self.heads.pred, &[("x", &x), ("t", &tt)], Mode::Eval)?;
            out.extend(y.data().iter().map(|v| self.target_shift + self.target_scale * v));
        }
        Ok(out)
    }

    pub fn predict_outcome(&self, x: &[f64], t: f64) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::shape("x", format!("covariate of length {}, expected {}", x.len(), self.input_dim())));
        }
        Ok(self.predict_outcomes(x, &[t])?[0])
    }

    /// `ŷ(x, 1) − ŷ(x, 0)`.
    pub fn predict_cate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict_outcome(x, 1.0)? - self.predict_outcome(x, 0.0)?)
    }

    /// [`CausalNet::predict_cate`] for every row of `rows`.
    pub fn predict_cates(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let n = rows.len() / self.input_dim().max(1);
        let on = self.predict_outcomes(rows, &vec![1.0; n])?;
        let off = self.predict_outcomes(rows, &vec![0.0; n])?;
        Ok(on.iter().zip(&off).map(|(a, b)| a - b).collect())
    }

    /// Replaces every weight with a seeded draw of the same shape; useful for
    /// probing an untrained model away from the default initialization.
    pub fn perturb(&mut self, scale: f64, seed: u64) -> Result<()> {
        let mut r = rng::stream(seed, 1);
        let names: Vec<(String, Vec<usize>)> =
            self.graph.params().map(|(n, t)| (n.to_string(), t.shape().to_vec())).collect();
        for (name, shape) in names {
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| r.random_range(-scale..scale)).collect();
            self.graph.set_param(&name, Tensor::new(shape, data)?)?;
        }
        Ok(())
    }
}
