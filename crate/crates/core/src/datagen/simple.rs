//! Simple-relation outcome generators over flattened noisy circle images:
//! `Y(t) = f_t(X) + ε(t)` with `ε(t) ~ N(0, σ²)`.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::baselines::ForestModel;
use crate::error::{Error, Result};
use crate::numerics::NetworkGraph;
use crate::rng;

use super::circle::{noisy_covariate, IMAGE_SIDE};
use super::surrogate::{eval_net, make_net_generator, make_tree_generator};
use super::{observed_outcome, CausalDataset, GeneratorKind, GeneratorSpec, HiddenTruth, ObservedData};

const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
/// Size of the noise-free sample the noise level is calibrated on.
pub const SIGMA_REFERENCE_N: usize = 10_000;
const LINEAR_ACTIVE: usize = 20;
const LINEAR_COEF_VAR: f64 = 10.0;
const POLY_COEF_MEAN: f64 = 5.0;
const POLY_COEF_VAR: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimpleGenerator {
    Linear,
    Polynomial,
    Tree,
    Net,
}

impl SimpleGenerator {
    pub fn kind(self) -> GeneratorKind {
        match self {
            SimpleGenerator::Linear => GeneratorKind::Linear,
            SimpleGenerator::Polynomial => GeneratorKind::Polynomial,
            SimpleGenerator::Tree => GeneratorKind::Tree,
            SimpleGenerator::Net => GeneratorKind::Net,
        }
    }
}

/// The pair `(f0, f1)`. Linear and polynomial relations store the effect
/// term separately so `τ = f1 − f0` is evaluated directly.
#[derive(Debug, Clone)]
pub enum SimpleRelation {
    /// `f0 = xᵀβ₁`, `τ = xᵀβ₂`.
    Linear { beta1: Vec<f64>, beta2: Vec<f64> },
    /// `f0 = xᵀβ₃ + xᵀD₁x`, `τ = xᵀβ₄ + xᵀD₂x` with diagonal `D`.
    Polynomial {
        beta3: Vec<f64>,
        beta4: Vec<f64>,
        d1: Vec<f64>,
        d2: Vec<f64>,
    },
    Tree { f0: ForestModel, f1: ForestModel },
    Net { f0: NetworkGraph, f1: NetworkGraph },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn quad(x: &[f64], d: &[f64]) -> f64 {
    x.iter().zip(d).map(|(v, w)| w * v * v).sum()
}

impl SimpleRelation {
    /// Draws the relation's structure from `seed`.
    pub fn build(kind: SimpleGenerator, seed: u64) -> Result<Self> {
        let mut r = rng::stream(rng::derive(seed, "simple-coefficients", 0), 0);
        Ok(match kind {
            SimpleGenerator::Linear => {
                let n = Normal::new(0.0, LINEAR_COEF_VAR.sqrt()).expect("valid normal");
                let mut draw = || {
                    let mut b = vec![0.0; PIXELS];
                    b[..LINEAR_ACTIVE].iter_mut().for_each(|v| *v = n.sample(&mut r));
                    b
                };
                let beta1 = draw();
                let beta2 = draw();
                SimpleRelation::Linear { beta1, beta2 }
            }
            SimpleGenerator::Polynomial => {
                let n = Normal::new(POLY_COEF_MEAN, POLY_COEF_VAR.sqrt()).expect("valid normal");
                let mut draw = || (0..PIXELS).map(|_| n.sample(&mut r)).collect::<Vec<f64>>();
                let beta3 = draw();
                let beta4 = draw();
                let d1 = draw();
                let d2 = draw();
                SimpleRelation::Polynomial { beta3, beta4, d1, d2 }
            }
            SimpleGenerator::Tree => {
                let (f0, f1) = make_tree_generator(seed)?;
                SimpleRelation::Tree { f0, f1 }
            }
            SimpleGenerator::Net => {
                let (f0, f1) = make_net_generator(seed)?;
                SimpleRelation::Net { f0, f1 }
            }
        })
    }

    /// `(f0(x), τ(x))` for each of the row-major images in `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let rows = x.chunks(PIXELS);
        Ok(match self {
            SimpleRelation::Linear { beta1, beta2 } => rows.map(|r| (dot(r, beta1), dot(r, beta2))).unzip(),
            SimpleRelation::Polynomial { beta3, beta4, d1, d2 } => rows
                .map(|r| (dot(r, beta3) + quad(r, d1), dot(r, beta4) + quad(r, d2)))
                .unzip(),
            SimpleRelation::Tree { f0, f1 } => {
                let mut base = Vec::new();
                let mut tau = Vec::new();
                for r in rows {
                    let a = f0.predict(r)?;
                    base.push(a);
                    tau.push(f1.predict(r)? - a);
                }
                (base, tau)
            }
            SimpleRelation::Net { f0, f1 } => {
                let a = eval_net(f0, x)?;
                let b = eval_net(f1, x)?;
                let tau = b.iter().zip(&a).map(|(p, q)| p - q).collect();
                (a, tau)
            }
        })
    }
}

/// `σ = √(Σ y² / (10 n))`, the noise level giving a signal-to-noise ratio
/// of 10 on the sample `y`.
pub fn calibrate_sigma(y: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::Data("cannot calibrate noise on an empty sample".into()));
    }
    let ss: f64 = y.iter().map(|v| v * v).sum();
    if ss == 0.0 {
        return Err(Error::Degenerate("all reference outcomes are zero".into()));
    }
    Ok((ss / (10.0 * y.len() as f64)).sqrt())
}

/// A built relation plus its noise level.
#[derive(Debug, Clone)]
pub struct SimpleModel {
    pub generator: SimpleGenerator,
    pub spec: GeneratorSpec,
    pub relation: SimpleRelation,
    pub sigma: f64,
}

fn sample_images(seed: u64, n: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(n * PIXELS);
    for i in 0..n {
        x.extend(noisy_covariate(seed, i).1);
    }
    x
}

impl SimpleModel {
    /// Builds the relation from `spec.structure_seed` and fixes σ, either as
    /// given or calibrated on a noise-free reference sample.
    pub fn new(spec: &GeneratorSpec) -> Result<Self> {
        let generator = spec
            .kind
            .simple()
            .ok_or_else(|| Error::Config(format!("`{}` is not a simple-relation generator", spec.kind)))?;
        let relation = SimpleRelation::build(generator, spec.structure_seed)?;
        let mut model = SimpleModel {
            generator,
            spec: spec.clone(),
            relation,
            sigma: 0.0,
        };
        model.sigma = match spec.sigma {
            Some(s) if s >= 0.0 && s.is_finite() => s,
            Some(s) => return Err(Error::Config(format!("noise level must be finite and nonnegative, got {s}"))),
            None => calibrate_sigma(&model.reference_outcomes()?)?,
        };
        model.spec.sigma = Some(model.sigma);
        Ok(model)
    }

    /// Noise-free observed outcomes of the calibration sample.
    pub fn reference_outcomes(&self) -> Result<Vec<f64>> {
        let seed = rng::derive(self.spec.structure_seed, "sigma-reference", 0);
        let x = sample_images(seed, SIGMA_REFERENCE_N);
        let (f0, tau) = self.relation.evaluate(&x)?;
        Ok((0..SIGMA_REFERENCE_N)
            .map(|i| {
                let t = if rng::stream(seed ^ 0x5eed, i as u64).random_bool(0.5) { 1.0 } else { 0.0 };
                observed_outcome(t, f0[i], f0[i] + tau[i])
            })
            .collect())
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<CausalDataset> {
        if n == 0 {
            return Err(Error::Config("dataset size must be at least 1".into()));
        }
        let x = sample_images(seed, n);
        let (f0, tau) = self.relation.evaluate(&x)?;
        let noise = Normal::new(0.0, self.sigma).map_err(|e| Error::Config(e.to_string()))?;
        let outcome_seed = rng::derive(seed, "simple-outcome", 0);
        let (mut t, mut y, mut y0s, mut y1s) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for i in 0..n {
            let mut r = rng::stream(outcome_seed, i as u64);
            let e0 = noise.sample(&mut r);
            let e1 = noise.sample(&mut r);
            let ti = if r.random_bool(0.5) { 1.0 } else { 0.0 };
            let (y0, y1) = (f0[i] + e0, f0[i] + tau[i] + e1);
            t.push(ti);
            y.push(observed_outcome(ti, y0, y1));
            y0s.push(y0);
            y1s.push(y1);
        }
        let observed = ObservedData::new(vec![1, IMAGE_SIDE, IMAGE_SIDE], x, t, y)?;
        let truth = HiddenTruth {
            y0: y0s,
            y1: y1s,
            tau,
            circles: None,
        };
        CausalDataset::new(self.generator.kind(), self.spec.describe(), seed, observed, truth)
    }
}

/// Builds the generator described by `spec` and draws `n` records.
pub fn gen_simple(n: usize, spec: &GeneratorSpec, seed: u64) -> Result<CausalDataset> {
    SimpleModel::new(spec)?.generate(n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_formula() {
        let s = calibrate_sigma(&[10f64.sqrt(); 7]).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
        let s = calibrate_sigma(&[1.0, 2.0, 3.0]).unwrap();
        assert!((s - (14.0f64 / 30.0).sqrt()).abs() < 1e-15);
        assert!((s - 0.68313).abs() < 1e-5);
        assert!(calibrate_sigma(&[0.0, 0.0]).is_err());
        assert!(calibrate_sigma(&[]).is_err());
    }

    #[test]
    fn linear_sparsity_and_zero_effect() {
        let SimpleRelation::Linear { beta1, beta2 } = SimpleRelation::build(SimpleGenerator::Linear, 5).unwrap() else {
            unreachable!()
        };
        assert!(beta1[LINEAR_ACTIVE..].iter().chain(&beta2[LINEAR_ACTIVE..]).all(|&b| b == 0.0));
        assert!(beta1[..LINEAR_ACTIVE].iter().all(|&b| b != 0.0));
        let rel = SimpleRelation::Linear {
            beta1,
            beta2: vec![0.0; PIXELS],
        };
        let (_, tau) = rel.evaluate(&sample_images(1, 5)).unwrap();
        assert!(tau.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn degenerate_polynomial_matches_linear() {
        let SimpleRelation::Linear { beta1, beta2 } = SimpleRelation::build(SimpleGenerator::Linear, 8).unwrap() else {
            unreachable!()
        };
        let poly = SimpleRelation::Polynomial {
            beta3: beta1.clone(),
            beta4: beta2.clone(),
            d1: vec![0.0; PIXELS],
            d2: vec![0.0; PIXELS],
        };
        let lin = SimpleRelation::Linear { beta1, beta2 };
        let x = sample_images(2, 10);
        assert_eq!(lin.evaluate(&x).unwrap().1, poly.evaluate(&x).unwrap().1);
    }

    #[test]
    fn noise_off_consistency() {
        let spec = GeneratorSpec {
            sigma: Some(0.0),
            ..GeneratorSpec::new(GeneratorKind::Linear)
        };
        let d = gen_simple(50, &spec, 4).unwrap();
        let (o, h) = (d.observed(), d.truth());
        for i in 0..d.len() {
            assert!((h.y1[i] - h.y0[i] - h.tau[i]).abs() <= 1e-9 * h.y1[i].abs().max(1.0));
            assert_eq!(o.y[i], observed_outcome(o.t[i], h.y0[i], h.y1[i]));
        }
        assert!(gen_simple(10, &GeneratorSpec::new(GeneratorKind::CircleNoisy), 1).is_err());
    }
}
