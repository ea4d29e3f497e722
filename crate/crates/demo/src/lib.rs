//! Browser bindings for three small views of `cate-core`: a rendered
//! circle image, the two diverter gates, and a T-learner fitted on circle
//! data with its estimated-versus-true effect scatter.

use cate_core::baselines::{fit_meta, predict_cate_meta, ForestConfig, MetaKind};
use cate_core::datagen::{gen_circle, render_circle, Circle, IMAGE_SIDE};
use cate_core::diverter::{control_gate, treated_gate};
use cate_core::eval::{mse_cate, relative_mse};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Side length of the square images.
#[wasm_bindgen]
pub fn image_side() -> usize {
    IMAGE_SIDE
}

/// Row-major pixels of one circle, with optional pixel noise.
#[wasm_bindgen]
pub fn circle_image(radius: f64, origin_x: f64, origin_y: f64, noisy: bool, seed: u64) -> Vec<f64> {
    let circle = Circle {
        radius: radius.clamp(0.0, 16.0),
        origin_x,
        origin_y,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    render_circle(&circle, noisy.then_some(&mut rng))
}

/// `steps` samples of `f` over `[lo, hi]` for treatment value `t`,
/// flattened as `f, control, treated` triples.
#[wasm_bindgen]
pub fn diverter_curves(t: f64, lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    let steps = steps.max(2);
    let mut out = Vec::with_capacity(steps * 3);
    for i in 0..steps {
        let f = lo + (hi - lo) * i as f64 / (steps - 1) as f64;
        out.extend([f, control_gate(f + t), treated_gate(f + t)]);
    }
    out
}

#[wasm_bindgen]
pub struct Scatter {
    truth: Vec<f64>,
    estimate: Vec<f64>,
    mse: f64,
    relative_mse: f64,
}

#[wasm_bindgen]
impl Scatter {
    #[wasm_bindgen(getter)]
    pub fn truth(&self) -> Vec<f64> {
        self.truth.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn estimate(&self) -> Vec<f64> {
        self.estimate.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn mse(&self) -> f64 {
        self.mse
    }

    #[wasm_bindgen(getter)]
    pub fn relative_mse(&self) -> f64 {
        self.relative_mse
    }
}

/// Fits a T-learner of `trees` forests on `n_train` circles and scores it
/// on `n_test` fresh ones.
#[wasm_bindgen]
pub fn tlearner_scatter(n_train: usize, n_test: usize, noisy: bool, trees: usize, seed: u64) -> Result<Scatter, JsError> {
    let train = gen_circle(n_train, noisy, seed).map_err(js_err)?;
    let test = gen_circle(n_test, noisy, seed.wrapping_add(1)).map_err(js_err)?;
    let cfg = ForestConfig {
        trees,
        seed,
        ..Default::default()
    };
    let learner = fit_meta(train.observed(), MetaKind::T, &cfg).map_err(js_err)?;
    let estimate = predict_cate_meta(&learner, test.observed()).map_err(js_err)?;
    let truth = test.truth().tau.clone();
    Ok(Scatter {
        mse: mse_cate(&estimate, &truth).map_err(js_err)?,
        relative_mse: relative_mse(&estimate, &truth).map_err(js_err)?,
        truth,
        estimate,
    })
}
