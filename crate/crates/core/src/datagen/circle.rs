use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

use super::{observed_outcome, CausalDataset, GeneratorKind, HiddenTruth, ObservedData};

pub const IMAGE_SIDE: usize = 32;
/// Pixel value inside the disc for noiseless images.
pub const INSIDE_VALUE: f64 = 180.0;
const MAX_RADIUS: f64 = 16.0;
/// Pixel noise variance for noisy images (standard deviation 8).
const PIXEL_NOISE_VAR: f64 = 64.0;
const OUTCOME_VAR_NOISELESS: f64 = 1.0;
const OUTCOME_VAR_NOISY: f64 = 0.4;

/// A disc on the 32×32 grid. The origin is continuous; pixel `(row, col)`
/// is inside when its center `(col + 0.5, row + 0.5)` lies strictly within
/// `radius` of the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub radius: f64,
    pub origin_x: f64,
    pub origin_y: f64,
}

impl Circle {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        let dx = col as f64 + 0.5 - self.origin_x;
        let dy = row as f64 + 0.5 - self.origin_y;
        dx * dx + dy * dy < self.radius * self.radius
    }
}

/// Renders a circle as 1024 row-major pixels. With `noise`, inside and
/// outside pixels are drawn from N(180, 64) and N(0, 64), truncated to
/// [0, 255] and rounded.
pub fn render_circle(circle: &Circle, noise: Option<&mut Rng>) -> Vec<f64> {
    let mut px = Vec::with_capacity(IMAGE_SIDE * IMAGE_SIDE);
    match noise {
        None => {
            for r in 0..IMAGE_SIDE {
                for c in 0..IMAGE_SIDE {
                    px.push(if circle.contains(r, c) { INSIDE_VALUE } else { 0.0 });
                }
            }
        }
        Some(rng) => {
            let sd = PIXEL_NOISE_VAR.sqrt();
            let inside = Normal::new(INSIDE_VALUE, sd).expect("valid normal");
            let outside = Normal::new(0.0, sd).expect("valid normal");
            for r in 0..IMAGE_SIDE {
                for c in 0..IMAGE_SIDE {
                    let v = if circle.contains(r, c) {
                        inside.sample(rng)
                    } else {
                        outside.sample(rng)
                    };
                    px.push(v.clamp(0.0, 255.0).round());
                }
            }
        }
    }
    px
}

pub(crate) fn sample_circle(rng: &mut Rng) -> Circle {
    Circle {
        radius: rng.random_range(0.0..MAX_RADIUS),
        origin_x: rng.random_range(0.0..IMAGE_SIDE as f64),
        origin_y: rng.random_range(0.0..IMAGE_SIDE as f64),
    }
}

/// Record `i` of a noisy-circle covariate stream: its geometry and pixels.
pub(crate) fn noisy_covariate(seed: u64, i: usize) -> (Circle, Vec<f64>) {
    let mut rng = rng::stream(seed, i as u64);
    let circle = sample_circle(&mut rng);
    let px = render_circle(&circle, Some(&mut rng));
    (circle, px)
}

/// Circle-image experiment. Radius ~ U(0, 16), origin ~ U(0, 32)², outcome
/// Y(0) ~ N(0, v), Y(1) ~ N(R, v) with v = 1 (noiseless) or 0.4 (noisy),
/// T ~ Bernoulli(0.5). The scoring target is the radius.
pub fn gen_circle(n: usize, noisy: bool, seed: u64) -> Result<CausalDataset> {
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    let var = if noisy { OUTCOME_VAR_NOISY } else { OUTCOME_VAR_NOISELESS };
    let sd = var.sqrt();
    let mut x = Vec::with_capacity(n * IMAGE_SIDE * IMAGE_SIDE);
    let (mut t, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut y0s, mut y1s, mut taus, mut circles) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let mut rng = rng::stream(seed, i as u64);
        let circle = sample_circle(&mut rng);
        let px = render_circle(&circle, noisy.then_some(&mut rng));
        let y0 = Normal::new(0.0, sd).expect("valid normal").sample(&mut rng);
        let y1 = Normal::new(circle.radius, sd).expect("valid normal").sample(&mut rng);
        let ti = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        x.extend(px);
        t.push(ti);
        y.push(observed_outcome(ti, y0, y1));
        y0s.push(y0);
        y1s.push(y1);
        taus.push(circle.radius);
        circles.push(circle);
    }
    let kind = if noisy {
        GeneratorKind::CircleNoisy
    } else {
        GeneratorKind::CircleNoiseless
    };
    let observed = ObservedData::new(vec![1, IMAGE_SIDE, IMAGE_SIDE], x, t, y)?;
    let truth = HiddenTruth {
        y0: y0s,
        y1: y1s,
        tau: taus,
        circles: Some(circles),
    };
    CausalDataset::new(kind, format!("kind={kind}"), seed, observed, truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_radius_is_blank() {
        let c = Circle {
            radius: 0.0,
            origin_x: 16.0,
            origin_y: 16.0,
        };
        assert!(render_circle(&c, None).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inside_count_matches_exhaustive_lattice_count() {
        let c = Circle {
            radius: 5.0,
            origin_x: 16.0,
            origin_y: 16.0,
        };
        let px = render_circle(&c, None);
        let rendered = px.iter().filter(|&&v| v == INSIDE_VALUE).count();
        // Brute force over every pixel center.
        let mut brute = 0;
        for r in 0..32 {
            for col in 0..32 {
                let (cx, cy) = (col as f64 + 0.5, r as f64 + 0.5);
                if ((cx - 16.0).powi(2) + (cy - 16.0).powi(2)).sqrt() < 5.0 {
                    brute += 1;
                }
            }
        }
        assert_eq!(rendered, brute);
        // Half-integer centers against an integer origin: 80 lattice points.
        assert_eq!(brute, 80);
    }

    #[test]
    fn pixel_value_sets() {
        let clean = gen_circle(20, false, 1).unwrap();
        assert!(clean.observed().x.iter().all(|&v| v == 0.0 || v == 180.0));
        let noisy = gen_circle(20, true, 1).unwrap();
        assert!(noisy
            .observed()
            .x
            .iter()
            .all(|&v| v.fract() == 0.0 && (0.0..=255.0).contains(&v)));
    }

    #[test]
    fn consistency_and_target() {
        let d = gen_circle(200, false, 3).unwrap();
        let (obs, truth) = (d.observed(), d.truth());
        for i in 0..d.len() {
            assert_eq!(obs.y[i], observed_outcome(obs.t[i], truth.y0[i], truth.y1[i]));
            assert_eq!(truth.tau[i], truth.circles.as_ref().unwrap()[i].radius);
        }
        assert!(gen_circle(0, false, 3).is_err());
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let a = gen_circle(30, true, 9).unwrap();
        let b = gen_circle(30, true, 9).unwrap();
        assert_eq!(a, b);
        let c = gen_circle(10, true, 9).unwrap();
        assert_eq!(&a.observed().x[..10 * 1024], &c.observed().x[..]);
    }
}
