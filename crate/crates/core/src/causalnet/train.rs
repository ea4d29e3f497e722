use std::time::Instant;

use rand::seq::SliceRandom;

use crate::datagen::ObservedData;
use crate::error::{Error, Result};
use crate::numerics::{Mode, Tensor};
use crate::optim::{Adam, Optimizer, Sgd};
use crate::rng;

use super::CausalNet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub shuffle_seed: u64,
    /// Fit `(y − mean) / sd` and store the shift and scale in the model.
    pub standardize_target: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Sgd,
            lr: 0.01,
            batch_size: 64,
            epochs: 30,
            shuffle_seed: 0,
            standardize_target: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2 for batch normalization".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("at least one epoch is required".into()));
        }
        Ok(())
    }
}

/// Per-epoch mean training loss (in outcome units) and wall-clock seconds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub loss: Vec<f64>,
    pub seconds: Vec<f64>,
}

impl LossTrace {
    pub fn first(&self) -> Option<f64> {
        self.loss.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.loss.last().copied()
    }
}

/// Mini-batch training on the squared error of the observed outcome. Each
/// epoch visits a seeded permutation of the records; a trailing batch of a
/// single record is skipped because batch statistics need two.
pub fn train(model: &mut CausalNet, data: &ObservedData, cfg: &TrainConfig) -> Result<LossTrace> {
    cfg.validate()?;
    let n = data.len();
    let d = model.input_dim();
    if n < 2 {
        return Err(Error::Data(format!("training needs at least 2 records, got {n}")));
    }
    if data.dim() != d {
        return Err(Error::shape(
            "x",
            format!("covariates of dimension {} for a network expecting {d}", data.dim()),
        ));
    }
    let (shift, scale) = if cfg.standardize_target {
        let mean = data.y.iter().sum::<f64>() / n as f64;
        let var = data.y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        (mean, if var > 0.0 { var.sqrt() } else { 1.0 })
    } else {
        (0.0, 1.0)
    };
    model.target_shift = shift;
    model.target_scale = scale;

    let mut opt: Box<dyn Optimizer> = match cfg.optimizer {
        OptimizerKind::Sgd => Box::new(Sgd { lr: cfg.lr }),
        OptimizerKind::Adam => Box::new(Adam::new(cfg.lr)),
    };
    let loss_node = model.loss_node();
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = LossTrace::default();
    let (mut xb, mut tb, mut yb) = (Vec::new(), Vec::new(), Vec::new());
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng::stream(cfg.shuffle_seed, epoch as u64));
        let (mut total, mut seen) = (0.0, 0usize);
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            if idx.len() < 2 {
                continue;
            }
            xb.clear();
            tb.clear();
            yb.clear();
            for &i in idx {
                xb.extend_from_slice(data.row(i));
                tb.push(data.t[i]);
                yb.push((data.y[i] - shift) / scale);
            }
            let x = model.input_tensor(&xb)?;
            let t = Tensor::vector(tb.clone())?;
            let y = Tensor::new(vec![idx.len(), 1], yb.clone())?;
            let g = model.graph_mut();
            let loss = match g.forward_node(loss_node, &[("x", &x), ("t", &t), ("y", &y)], Mode::Train) {
                Ok(l) => l.data()[0],
                Err(Error::NonFinite { .. }) => return Err(Error::Diverged { epoch, batch }),
                Err(e) => return Err(e),
            };
            let grads = g.backward()?;
            if grads.params.iter().any(|(_, t)| !t.is_finite()) {
                return Err(Error::Diverged { epoch, batch });
            }
            opt.step(g, &grads.params);
            if g.params().any(|(_, p)| !p.is_finite()) {
                return Err(Error::Diverged { epoch, batch });
            }
            total += loss * idx.len() as f64;
            seen += idx.len();
        }
        trace.loss.push(total / seen as f64 * scale * scale);
        trace.seconds.push(started.elapsed().as_secs_f64());
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causalnet::{build_causalnet, CausalNetConfig};
    use crate::datagen::{gen_appendix, AppendixKind};

    fn data() -> ObservedData {
        gen_appendix(100, AppendixKind::Linear, 1.0, 2).unwrap().into_parts().0
    }

    #[test]
    fn constant_zero_target_loss_descends() {
        let mut d = data();
        d.y.iter_mut().for_each(|y| *y = 0.0);
        let mut net = build_causalnet(&CausalNetConfig::flat(9, 1)).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 16,
            ..Default::default()
        };
        let trace = train(&mut net, &d, &cfg).unwrap();
        assert_eq!(trace.loss.len(), 5);
        assert!(trace.last().unwrap() <= trace.first().unwrap());
    }

    #[test]
    fn deterministic_trace() {
        let d = data();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 33, // leaves a trailing batch of 1
            standardize_target: true,
            ..Default::default()
        };
        let run = || {
            let mut net = build_causalnet(&CausalNetConfig::flat(9, 7)).unwrap();
            let tr = train(&mut net, &d, &cfg).unwrap();
            (tr.loss, net.predict_cate(d.row(0)).unwrap())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_bad_configs() {
        let d = data();
        let mut net = build_causalnet(&CausalNetConfig::flat(9, 1)).unwrap();
        for cfg in [
            TrainConfig { lr: 0.0, ..Default::default() },
            TrainConfig { batch_size: 1, ..Default::default() },
        ] {
            assert!(matches!(train(&mut net, &d, &cfg), Err(Error::Config(_))));
        }
        let mut wrong = build_causalnet(&CausalNetConfig::flat(4, 1)).unwrap();
        assert!(train(&mut wrong, &d, &TrainConfig::default()).is_err());
    }

    #[test]
    fn divergence_reports_position() {
        let mut d = data();
        d.y.iter_mut().for_each(|y| *y *= 1e150);
        let mut net = build_causalnet(&CausalNetConfig::flat(9, 1)).unwrap();
        let cfg = TrainConfig { lr: 10.0, epochs: 3, ..Default::default() };
        assert!(matches!(train(&mut net, &d, &cfg), Err(Error::Diverged { .. })));
    }
}
