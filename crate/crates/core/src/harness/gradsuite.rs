//! Finite-difference checks of every primitive, of randomly composed
//! graphs, and of the full networks, over many seeds.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::causalnet::{build_causalnet, CausalNetConfig};
use crate::datagen::gen_circle;
use crate::diverter;
use crate::error::Result;
use crate::numerics::{grad_check, GradCheckOptions, NetworkGraph, NodeId, PoolMode, Tensor};
use crate::rng::{self, Rng};

use super::appendix::{build_toy, ToyNet, TOY_INPUT};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub name: &'static str,
    pub seeds: usize,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped_at_kink: usize,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= GRADCHECK_TOLERANCE && self.checked > 0
    }
}

fn normal(r: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| StandardNormal.sample(r)).collect()).expect("shape matches")
}

fn normal_scaled(r: &mut Rng, shape: &[usize], k: f64) -> Tensor {
    let t = normal(r, shape);
    Tensor::new(shape.to_vec(), t.data().iter().map(|v| v * k).collect()).expect("shape matches")
}

struct Case {
    g: NetworkGraph,
    inputs: Vec<(&'static str, Tensor)>,
}

impl Case {
    fn new() -> Self {
        Self {
            g: NetworkGraph::new(),
            inputs: Vec::new(),
        }
    }

    fn input(&mut self, name: &'static str, value: Tensor) -> NodeId {
        self.inputs.push((name, value));
        self.g.input(name)
    }

    fn param(&mut self, name: &str, value: Tensor) -> NodeId {
        self.g.param(name, value).expect("fresh parameter name")
    }

    /// Closes the graph with an MSE loss against a random target.
    fn finish(mut self, out: NodeId, shape: &[usize], r: &mut Rng) -> Result<Self> {
        let y = self.input("target", normal(r, shape));
        let l = self.g.mse_loss(out, y)?;
        self.g.set_output(l)?;
        Ok(self)
    }
}

const PRIMITIVES: [&str; 13] = [
    "dense",
    "conv2d",
    "maxpool2d",
    "maxpool2d-floor",
    "batchnorm",
    "batchnorm-spatial",
    "relu",
    "sigmoid",
    "add",
    "add_row_scalar",
    "affine",
    "flatten",
    "mse_loss",
];

fn primitive_case(name: &str, r: &mut Rng) -> Result<Case> {
    let mut c = Case::new();
    let (out, shape): (NodeId, Vec<usize>) = match name {
        "dense" => {
            let x = c.input("x", normal(r, &[3, 4]));
            let w = c.param("w", normal(r, &[2, 4]));
            let b = c.param("b", normal(r, &[2]));
            (c.g.dense(x, w, Some(b))?, vec![3, 2])
        }
        "conv2d" => {
            let x = c.input("x", normal(r, &[2, 2, 6, 5]));
            let k = c.param("k", normal(r, &[3, 2, 3, 3]));
            let b = c.param("b", normal(r, &[3]));
            (c.g.conv2d(x, k, b)?, vec![2, 3, 4, 3])
        }
        "maxpool2d" => {
            let x = c.input("x", normal(r, &[2, 2, 4, 6]));
            (c.g.maxpool2d(x, 2, PoolMode::Exact)?, vec![2, 2, 2, 3])
        }
        "maxpool2d-floor" => {
            let x = c.input("x", normal(r, &[2, 1, 5, 7]));
            (c.g.maxpool2d(x, 2, PoolMode::Floor)?, vec![2, 1, 2, 3])
        }
        "batchnorm" => {
            let x = c.input("x", normal(r, &[5, 3]));
            let gamma = c.param("gamma", normal(r, &[3]));
            let beta = c.param("beta", normal(r, &[3]));
            (c.g.batchnorm(x, gamma, beta, "bn")?, vec![5, 3])
        }
        "batchnorm-spatial" => {
            let x = c.input("x", normal(r, &[3, 2, 3, 3]));
            let gamma = c.param("gamma", normal(r, &[2]));
            let beta = c.param("beta", normal(r, &[2]));
            (c.g.batchnorm(x, gamma, beta, "bn")?, vec![3, 2, 3, 3])
        }
        "relu" => {
            let x = c.input("x", normal(r, &[4, 5]));
            (c.g.relu(x)?, vec![4, 5])
        }
        "sigmoid" => {
            let x = c.input("x", normal_scaled(r, &[4, 5], 3.0));
            (c.g.sigmoid(x)?, vec![4, 5])
        }
        "add" => {
            let a = c.input("a", normal(r, &[3, 4]));
            let b = c.input("b", normal(r, &[3, 4]));
            (c.g.add(a, b)?, vec![3, 4])
        }
        "add_row_scalar" => {
            let x = c.input("x", normal(r, &[3, 4]));
            let s = c.input("s", normal(r, &[3]));
            (c.g.add_row_scalar(x, s)?, vec![3, 4])
        }
        "affine" => {
            let x = c.input("x", normal(r, &[3, 4]));
            let scale = r.random_range(-3.0..3.0);
            (c.g.affine(x, scale, r.random_range(-1.0..1.0))?, vec![3, 4])
        }
        "flatten" => {
            let x = c.input("x", normal(r, &[2, 2, 3, 3]));
            (c.g.flatten(x)?, vec![2, 18])
        }
        "mse_loss" => {
            let p = c.input("pred", normal(r, &[4, 2]));
            (p, vec![4, 2])
        }
        other => unreachable!("unknown primitive {other}"),
    };
    c.finish(out, &shape, r)
}

/// A random chain of dense, activation, batchnorm, affine and residual
/// layers over `[5, 4]` activations.
fn random_chain(r: &mut Rng) -> Result<Case> {
    let mut c = Case::new();
    let mut h = c.input("x", normal(r, &[5, 4]));
    let depth = r.random_range(3..7);
    for i in 0..depth {
        h = match r.random_range(0..6) {
            0 => {
                let w = c.param(&format!("l{i}.w"), normal_scaled(r, &[4, 4], 0.5));
                let b = c.param(&format!("l{i}.b"), normal(r, &[4]));
                c.g.dense(h, w, Some(b))?
            }
            1 => c.g.relu(h)?,
            2 => c.g.sigmoid(h)?,
            3 => {
                let gamma = c.param(&format!("l{i}.gamma"), normal(r, &[4]));
                let beta = c.param(&format!("l{i}.beta"), normal(r, &[4]));
                c.g.batchnorm(h, gamma, beta, &format!("l{i}.bn"))?
            }
            4 => c.g.affine(h, r.random_range(0.5..2.0), r.random_range(-1.0..1.0))?,
            _ => {
                let w = c.param(&format!("l{i}.w"), normal_scaled(r, &[4, 4], 0.5));
                let inner = c.g.dense(h, w, None)?;
                c.g.add(h, inner)?
            }
        };
    }
    c.finish(h, &[5, 4], r)
}

fn diverter_case(r: &mut Rng) -> Result<Case> {
    let mut c = Case::new();
    let f = c.input("f", normal(r, &[3, 4]));
    let t = c.input("t", Tensor::vector((0..3).map(|_| r.random_range(0.0..1.0)).collect())?);
    let (ctl, trt) = diverter::build_split(&mut c.g, f, t)?;
    let m = diverter::build_merge(&mut c.g, ctl, trt)?;
    c.finish(m, &[3, 4], r)
}

fn two_layer_case(seed: u64, r: &mut Rng) -> Result<Case> {
    let toy = build_toy(ToyNet::TwoLayer { hidden: 6 }, seed)?;
    Ok(Case {
        g: toy.graph,
        inputs: vec![("x", normal(r, &[8, TOY_INPUT])), ("y", normal(r, &[8, 1]))],
    })
}

fn causalnet_case(seed: u64, r: &mut Rng) -> Result<Case> {
    let net = build_causalnet(&CausalNetConfig::image(seed))?;
    let d = gen_circle(4, true, seed)?;
    let mut t: Vec<f64> = d.observed().t.clone();
    // Keep both flows exercised.
    t[0] = 0.0;
    t[1] = 1.0;
    let x = net.input_tensor(&d.observed().x)?;
    let y = Tensor::new(vec![4, 1], (0..4).map(|_| r.random_range(0.0..16.0)).collect())?;
    Ok(Case {
        g: net.graph().clone(),
        inputs: vec![("x", x), ("t", Tensor::vector(t)?), ("y", y)],
    })
}

fn check_case(name: &'static str, seeds: usize, opts: &GradCheckOptions, mut build: impl FnMut(u64, &mut Rng) -> Result<Case>) -> Result<CaseResult> {
    let mut res = CaseResult {
        name,
        seeds,
        max_rel_error: 0.0,
        checked: 0,
        skipped_at_kink: 0,
    };
    for s in 0..seeds as u64 {
        let seed = rng::derive(0x6ac4, name, s);
        let mut r = rng::stream(seed, 0);
        let mut c = build(seed, &mut r)?;
        let inputs: Vec<(&str, &Tensor)> = c.inputs.iter().map(|(n, t)| (*n, t)).collect();
        let o = GradCheckOptions { entry_seed: seed, ..opts.clone() };
        let rep = grad_check(&mut c.g, &inputs, &o)?;
        res.max_rel_error = res.max_rel_error.max(rep.max_rel_error);
        res.checked += rep.checked;
        res.skipped_at_kink += rep.skipped_at_kink;
    }
    Ok(res)
}

/// Runs every case over `seeds` seeds with step 1e-5. Gradients with
/// respect to bound inputs are checked too, except for CausalNet where a
/// seeded sample of entries per parameter tensor is checked.
pub fn gradient_suite(seeds: usize) -> Result<Vec<CaseResult>> {
    let full = GradCheckOptions {
        include_inputs: true,
        ..Default::default()
    };
    let mut out = Vec::new();
    for name in PRIMITIVES {
        out.push(check_case(name, seeds, &full, |_, r| primitive_case(name, r))?);
    }
    out.push(check_case("diverter", seeds, &full, |_, r| diverter_case(r))?);
    out.push(check_case("random-chain", seeds, &full, |_, r| random_chain(r))?);
    out.push(check_case("two-layer-sigmoid", seeds, &full, two_layer_case)?);
    let sampled = GradCheckOptions {
        max_entries_per_tensor: Some(12),
        ..Default::default()
    };
    out.push(check_case("causalnet", seeds, &sampled, causalnet_case)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_pass_on_a_few_seeds() {
        for name in PRIMITIVES {
            let res = check_case(name, 3, &GradCheckOptions { include_inputs: true, ..Default::default() }, |_, r| {
                primitive_case(name, r)
            })
            .unwrap();
            assert!(res.passed(), "{res:?}");
        }
    }
}
