//! First-order optimizers over a graph's parameters.

use crate::numerics::{GradientMap, NetworkGraph};

pub trait Optimizer {
    fn step(&mut self, graph: &mut NetworkGraph, grads: &GradientMap);
}

/// Plain stochastic gradient descent: `θ ← θ − lr·g`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, graph: &mut NetworkGraph, grads: &GradientMap) {
        for ((_, p), (_, g)) in graph.params_mut().zip(grads.iter()) {
            for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                *w -= self.lr * d;
            }
        }
    }
}

/// Adam with bias-corrected first and second moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, graph: &mut NetworkGraph, grads: &GradientMap) {
        if self.m.is_empty() {
            self.m = grads.iter().map(|(_, g)| vec![0.0; g.numel()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, ((_, p), (_, g))) in graph.params_mut().zip(grads.iter()).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (w, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * d;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * d * d;
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                *w -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}
