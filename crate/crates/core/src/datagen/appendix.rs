//! Nine-dimensional toy generators with a constant treatment effect of 10.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

use super::{observed_outcome, CausalDataset, GeneratorKind, GeneratorSpec, HiddenTruth, ObservedData};

pub const APPENDIX_DIM: usize = 9;
pub const APPENDIX_EFFECT: f64 = 10.0;
/// Coordinates `0..GAUSSIAN_COORDS` are N(0, σ_x²); the rest are U(0, 5).
const GAUSSIAN_COORDS: usize = 5;
const UNIFORM_HIGH: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppendixKind {
    Linear,
    Polynomial,
}

impl AppendixKind {
    pub fn generator(self) -> GeneratorKind {
        match self {
            AppendixKind::Linear => GeneratorKind::AppendixLinear,
            AppendixKind::Polynomial => GeneratorKind::AppendixPoly,
        }
    }

    /// `Σ j·x_j`, plus `Σ (11 − j)·x_j²` for the polynomial kind (j = 1..9).
    pub fn signal(self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, &v)| {
                let j = (i + 1) as f64;
                match self {
                    AppendixKind::Linear => j * v,
                    AppendixKind::Polynomial => j * v + (11.0 - j) * v * v,
                }
            })
            .sum()
    }

    /// Outcome at treatment `t` with residual `eps`.
    pub fn outcome(self, x: &[f64], t: f64, eps: f64) -> f64 {
        self.signal(x) + APPENDIX_EFFECT * t + eps
    }
}

/// Both potential outcomes share the residual, so the individual effect is
/// exactly 10 for every record.
pub fn gen_appendix(n: usize, kind: AppendixKind, sigma_x: f64, seed: u64) -> Result<CausalDataset> {
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    let gauss = Normal::new(0.0, sigma_x).map_err(|e| Error::Config(format!("covariate scale: {e}")))?;
    let mut x = Vec::with_capacity(n * APPENDIX_DIM);
    let (mut t, mut y, mut y0s, mut y1s) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let mut r = rng::stream(seed, i as u64);
        let row: Vec<f64> = (0..APPENDIX_DIM)
            .map(|j| {
                if j < GAUSSIAN_COORDS {
                    gauss.sample(&mut r)
                } else {
                    r.random_range(0.0..UNIFORM_HIGH)
                }
            })
            .collect();
        let eps: f64 = StandardNormal.sample(&mut r);
        let ti = if r.random_bool(0.5) { 1.0 } else { 0.0 };
        let (y0, y1) = (kind.outcome(&row, 0.0, eps), kind.outcome(&row, 1.0, eps));
        x.extend(row);
        t.push(ti);
        y.push(observed_outcome(ti, y0, y1));
        y0s.push(y0);
        y1s.push(y1);
    }
    let spec = GeneratorSpec {
        sigma_x,
        ..GeneratorSpec::new(kind.generator())
    };
    let observed = ObservedData::new(vec![APPENDIX_DIM], x, t, y)?;
    let truth = HiddenTruth {
        y0: y0s,
        y1: y1s,
        tau: vec![APPENDIX_EFFECT; n],
        circles: None,
    };
    CausalDataset::new(kind.generator(), spec.describe(), seed, observed, truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_evaluations() {
        let ones = [1.0; APPENDIX_DIM];
        assert_eq!(AppendixKind::Linear.outcome(&ones, 0.0, 0.0), 45.0);
        // Σ j = 45 and Σ (11 − j) = 54 over j = 1..9.
        assert_eq!(AppendixKind::Polynomial.outcome(&ones, 1.0, 0.0), 109.0);
    }

    #[test]
    fn constant_effect_and_ranges() {
        for kind in [AppendixKind::Linear, AppendixKind::Polynomial] {
            let d = gen_appendix(500, kind, 10.0, 3).unwrap();
            assert!(d.truth().tau.iter().all(|&t| t == APPENDIX_EFFECT));
            for row in d.observed().rows() {
                assert!(row[GAUSSIAN_COORDS..].iter().all(|&v| (0.0..UNIFORM_HIGH).contains(&v)));
            }
        }
        assert!(gen_appendix(0, AppendixKind::Linear, 1.0, 0).is_err());
    }
}
