//! Toy-network studies on the nine-dimensional generators: a linear network,
//! a one-layer sigmoid network from two starting points, and a two-layer
//! sigmoid network with batchnorm compared against adjusted regression.

use std::fmt::Write as _;

use crate::baselines::{fit_adjusted, LinearFitOptions};
use crate::datagen::{gen_appendix, AppendixKind, CausalDataset, APPENDIX_DIM};
use crate::error::{Error, Result};
use crate::numerics::{glorot_uniform, Mode, NetworkGraph, NodeId, Tensor};
use crate::optim::{Adam, Optimizer};
use crate::rng;

/// Covariates plus the treatment indicator.
pub const TOY_INPUT: usize = APPENDIX_DIM + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyNet {
    /// `dense(10 → 1)`, the same form as linear regression.
    Linear,
    /// `dense(10 → 1)`, sigmoid, then a scalar affine output.
    Sigmoid,
    /// `dense(10 → h)` without bias, batchnorm, sigmoid, `dense(h → 1)`.
    TwoLayer { hidden: usize },
}

impl ToyNet {
    pub fn name(self) -> &'static str {
        match self {
            ToyNet::Linear => "linear-net",
            ToyNet::Sigmoid => "sigmoid-net",
            ToyNet::TwoLayer { .. } => "two-layer-sigmoid",
        }
    }
}

/// A toy network with inputs `x` (`[n, 10]`) and `y` (`[n, 1]`).
pub struct ToyGraph {
    pub graph: NetworkGraph,
    pub pred: NodeId,
}

pub fn build_toy(net: ToyNet, seed: u64) -> Result<ToyGraph> {
    let mut g = NetworkGraph::new();
    let mut r = rng::stream(seed, 0);
    let x = g.input("x");
    let y = g.input("y");
    let mut dense = |g: &mut NetworkGraph, x: NodeId, name: &str, i: usize, o: usize, bias: bool| -> Result<NodeId> {
        let w = g.param(&format!("{name}.weight"), glorot_uniform(&[o, i], i, o, &mut r))?;
        let b = if bias {
            Some(g.param(&format!("{name}.bias"), Tensor::zeros(vec![o]))?)
        } else {
            None
        };
        g.dense(x, w, b)
    };
    let pred = match net {
        ToyNet::Linear => dense(&mut g, x, "out", TOY_INPUT, 1, true)?,
        ToyNet::Sigmoid => {
            let h = dense(&mut g, x, "hidden", TOY_INPUT, 1, true)?;
            let h = g.sigmoid(h)?;
            dense(&mut g, h, "out", 1, 1, true)?
        }
        ToyNet::TwoLayer { hidden } => {
            // The batchnorm shift replaces the first layer's bias.
            let h = dense(&mut g, x, "hidden", TOY_INPUT, hidden, false)?;
            let gamma = g.param("bn.gamma", Tensor::full(vec![hidden], 1.0))?;
            let beta = g.param("bn.beta", Tensor::zeros(vec![hidden]))?;
            let h = g.batchnorm(h, gamma, beta, "bn")?;
            let h = g.sigmoid(h)?;
            dense(&mut g, h, "out", hidden, 1, true)?
        }
    };
    let loss = g.mse_loss(pred, y)?;
    g.set_output(loss)?;
    Ok(ToyGraph { graph: g, pred })
}

/// Row-major `[x, t]` design of a dataset.
pub fn toy_inputs(d: &CausalDataset) -> Result<Tensor> {
    let obs = d.observed();
    let mut v = Vec::with_capacity(obs.len() * TOY_INPUT);
    for (row, &t) in obs.rows().zip(&obs.t) {
        v.extend_from_slice(row);
        v.push(t);
    }
    Tensor::new(vec![obs.len(), TOY_INPUT], v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub test_size: usize,
    /// Sample size for the adjusted-regression comparison.
    pub baseline_size: usize,
    /// Trailing iterations averaged into the final loss.
    pub tail: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            iterations: 3000,
            batch_size: 200,
            lr: 0.01,
            test_size: 2000,
            baseline_size: 200,
            tail: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyStudy {
    pub name: String,
    pub net: ToyNet,
    pub data: AppendixKind,
    pub sigma_x: f64,
    pub init_seed: u64,
    /// Mini-batch loss per iteration, in outcome units.
    pub losses: Vec<f64>,
    /// Mean of the last `tail` iteration losses.
    pub final_loss: f64,
    /// Outcome MSE on an independent test sample.
    pub test_loss: f64,
    /// The same for adjusted regression fitted on `baseline_size` records.
    pub baseline_test_loss: f64,
}

/// Trains `net` with Adam on a fresh mini-batch from the generator at every
/// iteration. The outcome is standardized with moments of a reference
/// sample; reported losses are in original units.
pub fn run_toy(
    name: &str,
    net: ToyNet,
    data: AppendixKind,
    sigma_x: f64,
    seed: u64,
    init_seed: u64,
    cfg: &ToyConfig,
) -> Result<ToyStudy> {
    if cfg.iterations == 0 || cfg.batch_size < 2 || cfg.tail == 0 {
        return Err(Error::Config("toy study needs iterations, a batch of at least 2 and a tail".into()));
    }
    let reference = gen_appendix(cfg.test_size, data, sigma_x, rng::derive(seed, "toy-reference", 0))?;
    let ys = &reference.observed().y;
    let shift = ys.iter().sum::<f64>() / ys.len() as f64;
    let scale = (ys.iter().map(|v| (v - shift).powi(2)).sum::<f64>() / ys.len() as f64).sqrt().max(1e-12);
    let standardized = |d: &CausalDataset| -> Result<Tensor> {
        let y = &d.observed().y;
        Tensor::new(vec![y.len(), 1], y.iter().map(|v| (v - shift) / scale).collect())
    };

    let mut toy = build_toy(net, init_seed)?;
    let mut opt = Adam::new(cfg.lr);
    let mut losses = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let batch = gen_appendix(cfg.batch_size, data, sigma_x, rng::derive(seed, "toy-batch", it as u64))?;
        let (x, y) = (toy_inputs(&batch)?, standardized(&batch)?);
        let loss = match toy.graph.forward(&[("x", &x), ("y", &y)], Mode::Train) {
            Ok(l) => l.data()[0],
            Err(Error::NonFinite { .. }) => return Err(Error::Diverged { epoch: it, batch: 0 }),
            Err(e) => return Err(e),
        };
        let grads = toy.graph.backward()?;
        opt.step(&mut toy.graph, &grads.params);
        losses.push(loss * scale * scale);
    }
    let tail = cfg.tail.min(losses.len());
    let final_loss = losses[losses.len() - tail..].iter().sum::<f64>() / tail as f64;

    let test = gen_appendix(cfg.test_size, data, sigma_x, rng::derive(seed, "toy-test", 0))?;
    let pred = toy.graph.forward_node(toy.pred, &[("x", &toy_inputs(&test)?)], Mode::Eval)?;
    let ty = &test.observed().y;
    let test_loss = pred
        .data()
        .iter()
        .zip(ty)
        .map(|(p, y)| (shift + scale * p - y).powi(2))
        .sum::<f64>()
        / ty.len() as f64;

    let base_data = gen_appendix(cfg.baseline_size, data, sigma_x, rng::derive(seed, "toy-baseline", 0))?;
    let base = fit_adjusted(base_data.observed(), LinearFitOptions::plain())?;
    let obs = test.observed();
    let mut ss = 0.0;
    for (i, row) in obs.rows().enumerate() {
        ss += (base.predict_outcome(row, obs.t[i])? - obs.y[i]).powi(2);
    }
    Ok(ToyStudy {
        name: name.to_string(),
        net,
        data,
        sigma_x,
        init_seed,
        losses,
        final_loss,
        test_loss,
        baseline_test_loss: ss / obs.len() as f64,
    })
}

/// All appendix studies with one master seed.
pub fn run_appendix(seed: u64, cfg: &ToyConfig) -> Result<Vec<ToyStudy>> {
    let init = |i: u64| rng::derive(seed, "toy-init", i);
    let two = ToyNet::TwoLayer { hidden: 32 };
    let plan: [(&str, ToyNet, AppendixKind, f64, u64); 6] = [
        ("linear-net/linear/sx10", ToyNet::Linear, AppendixKind::Linear, 10.0, 0),
        ("sigmoid-net/linear/sx1/init-a", ToyNet::Sigmoid, AppendixKind::Linear, 1.0, 1),
        ("sigmoid-net/linear/sx1/init-b", ToyNet::Sigmoid, AppendixKind::Linear, 1.0, 2),
        ("two-layer/linear/sx1", two, AppendixKind::Linear, 1.0, 3),
        ("two-layer/poly/sx1", two, AppendixKind::Polynomial, 1.0, 3),
        ("two-layer/poly/sx10", two, AppendixKind::Polynomial, 10.0, 3),
    ];
    plan.iter()
        .map(|&(name, net, data, sx, i)| run_toy(name, net, data, sx, seed, init(i), cfg))
        .collect()
}

/// `iteration,<study>...` loss traces, one column per study.
pub fn traces_csv(studies: &[ToyStudy]) -> String {
    let mut out = String::from("iteration");
    for s in studies {
        out.push(',');
        out.push_str(&s.name);
    }
    out.push('\n');
    let n = studies.iter().map(|s| s.losses.len()).max().unwrap_or(0);
    for i in 0..n {
        let _ = write!(out, "{i}");
        for s in studies {
            match s.losses.get(i) {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_toy_is_exact_linear_map() {
        let mut toy = build_toy(ToyNet::Linear, 1).unwrap();
        let w: Vec<f64> = (1..=9).map(f64::from).chain([10.0]).collect();
        toy.graph.set_param("out.weight", Tensor::new(vec![1, TOY_INPUT], w).unwrap()).unwrap();
        let mut x = vec![1.0; TOY_INPUT];
        x[APPENDIX_DIM] = 0.0;
        let x = Tensor::new(vec![1, TOY_INPUT], x).unwrap();
        let p = toy.graph.forward_node(toy.pred, &[("x", &x)], Mode::Eval).unwrap();
        assert_eq!(p.data(), &[45.0]);
    }

    #[test]
    fn short_study_is_deterministic() {
        let cfg = ToyConfig {
            iterations: 20,
            test_size: 300,
            tail: 5,
            ..Default::default()
        };
        let a = run_toy("t", ToyNet::TwoLayer { hidden: 4 }, AppendixKind::Polynomial, 1.0, 3, 4, &cfg).unwrap();
        let b = run_toy("t", ToyNet::TwoLayer { hidden: 4 }, AppendixKind::Polynomial, 1.0, 3, 4, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.losses.len(), 20);
        assert!(a.test_loss.is_finite() && a.baseline_test_loss.is_finite());
        let csv = traces_csv(&[a]);
        assert_eq!(csv.lines().count(), 21);
    }
}
