//! S- and T-learners over random forests.

use crate::datagen::ObservedData;
use crate::error::{Error, Result};
use crate::rng;

use super::forest::{fit_forest, ForestConfig, ForestModel};
use super::tree::Features;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaKind {
    S,
    T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetaLearner {
    /// One forest on `[x, t]`.
    S { joint: ForestModel },
    /// One forest per arm on `x`.
    T { control: ForestModel, treated: ForestModel },
}

pub fn fit_meta(data: &ObservedData, kind: MetaKind, base: &ForestConfig) -> Result<MetaLearner> {
    if data.is_empty() {
        return Err(Error::Data("cannot fit a meta-learner on an empty dataset".into()));
    }
    let d = data.dim();
    match kind {
        MetaKind::S => {
            let mut joint = Vec::with_capacity(data.len() * (d + 1));
            for (row, &t) in data.rows().zip(&data.t) {
                joint.extend_from_slice(row);
                joint.push(t);
            }
            let forest = fit_forest(Features::new(&joint, d + 1)?, &data.y, base)?;
            Ok(MetaLearner::S { joint: forest })
        }
        MetaKind::T => {
            let treated = data.subset(|i| data.t[i] != 0.0);
            let control = data.subset(|i| data.t[i] == 0.0);
            if treated.is_empty() || control.is_empty() {
                let which = if treated.is_empty() { "treated" } else { "control" };
                return Err(Error::Data(format!("T-learner needs a nonempty {which} group")));
            }
            let arm = |part: &ObservedData, arm: u64| {
                let cfg = ForestConfig {
                    seed: rng::derive(base.seed, "t-learner-arm", arm),
                    ..base.clone()
                };
                fit_forest(Features::new(&part.x, d)?, &part.y, &cfg)
            };
            Ok(MetaLearner::T {
                control: arm(&control, 0)?,
                treated: arm(&treated, 1)?,
            })
        }
    }
}

impl MetaLearner {
    pub fn kind(&self) -> MetaKind {
        match self {
            MetaLearner::S { .. } => MetaKind::S,
            MetaLearner::T { .. } => MetaKind::T,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MetaLearner::S { joint } => joint.dim - 1,
            MetaLearner::T { control, .. } => control.dim,
        }
    }

    pub fn predict_cate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Data(format!(
                "covariate of length {} for a learner of dimension {}",
                x.len(),
                self.dim()
            )));
        }
        match self {
            MetaLearner::S { joint } => {
                let mut row = Vec::with_capacity(x.len() + 1);
                row.extend_from_slice(x);
                row.push(1.0);
                let on = joint.predict(&row)?;
                *row.last_mut().unwrap() = 0.0;
                Ok(on - joint.predict(&row)?)
            }
            MetaLearner::T { control, treated } => Ok(treated.predict(x)? - control.predict(x)?),
        }
    }
}

/// Predicts the CATE for each row of `data`.
pub fn predict_cate_meta(learner: &MetaLearner, data: &ObservedData) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    (0..data.len())
        .into_par_iter()
        .map(|i| learner.predict_cate(data.row(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn data(n: usize, effect: f64, seed: u64) -> ObservedData {
        let mut r = rng::stream(seed, 0);
        let mut x = Vec::new();
        let mut t = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = r.random_range(0.0..1.0);
            let b: f64 = r.random_range(0.0..1.0);
            let ti = if r.random_bool(0.5) { 1.0 } else { 0.0 };
            x.extend([a, b]);
            t.push(ti);
            y.push(0.5 * a + effect * ti);
        }
        ObservedData::new(vec![2], x, t, y).unwrap()
    }

    fn cfg() -> ForestConfig {
        ForestConfig {
            trees: 20,
            seed: 9,
            ..Default::default()
        }
    }

    #[test]
    fn constant_shift_recovered() {
        let d = data(400, 2.0, 1);
        for kind in [MetaKind::S, MetaKind::T] {
            let m = fit_meta(&d, kind, &cfg()).unwrap();
            let tau = predict_cate_meta(&m, &d).unwrap();
            let mean = tau.iter().sum::<f64>() / tau.len() as f64;
            assert!((mean - 2.0).abs() < 0.3, "{kind:?}: {mean}");
        }
    }

    #[test]
    fn t_learner_needs_both_arms() {
        let mut d = data(50, 1.0, 2);
        d.t.iter_mut().for_each(|t| *t = 1.0);
        assert!(fit_meta(&d, MetaKind::T, &cfg()).is_err());
        assert!(fit_meta(&d, MetaKind::S, &cfg()).is_ok());
    }

    #[test]
    fn identical_arm_models_give_zero() {
        let d = data(80, 0.0, 3);
        let MetaLearner::T { control, .. } = fit_meta(&d, MetaKind::T, &cfg()).unwrap() else {
            unreachable!()
        };
        let m = MetaLearner::T {
            treated: control.clone(),
            control,
        };
        assert_eq!(m.predict_cate(&[0.3, 0.7]).unwrap(), 0.0);
        assert!(m.predict_cate(&[0.3]).is_err());
    }
}
