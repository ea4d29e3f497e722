//! Seeded stand-ins for the pretrained outcome models of the tree- and
//! network-based generators. Both are built from the structure seed alone,
//! so a generator is reproducible without external datasets or weights.

use rand::Rng as _;

use crate::baselines::{fit_forest, Features, ForestConfig, ForestModel};
use crate::error::Result;
use crate::numerics::{glorot_uniform, Mode, NetworkGraph, PoolMode, Tensor};
use crate::rng::{self, Rng};

use super::circle::{noisy_covariate, IMAGE_SIDE};

const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
const TREE_TRAIN_N: usize = 1000;
const TREE_COUNT: usize = 50;
/// Pixels whose thresholded values index the label cell.
const CELL_BITS: usize = 4;
const CELL_THRESHOLD: f64 = 90.0;

/// Swaps labels with the same remainder mod 5 (1↔6, 2↔7, 3↔8, 4↔9).
pub fn swap_label(label: u8) -> u8 {
    match label {
        1..=4 => label + 5,
        6..=9 => label - 5,
        other => other,
    }
}

/// Piecewise-constant labelling of image space: a few random pixels are
/// thresholded, and each of the resulting cells carries a label in 1..=9.
#[derive(Debug, Clone, PartialEq)]
pub struct CellLabels {
    pub pixels: Vec<usize>,
    pub labels: Vec<u8>,
}

impl CellLabels {
    pub fn new(rng: &mut Rng) -> Self {
        let pixels = (0..CELL_BITS).map(|_| rng.random_range(0..PIXELS)).collect();
        let labels = (0..1 << CELL_BITS).map(|_| rng.random_range(1..=9)).collect();
        Self { pixels, labels }
    }

    pub fn label(&self, x: &[f64]) -> u8 {
        let cell = self
            .pixels
            .iter()
            .enumerate()
            .fold(0, |c, (k, &p)| c | (((x[p] > CELL_THRESHOLD) as usize) << k));
        self.labels[cell]
    }
}

/// Two 50-tree forests over 1024 pixels: `f0` fits the cell labels and `f1`
/// the mod-5 swapped labels, each on its own noisy-image training sample.
pub fn make_tree_generator(seed: u64) -> Result<(ForestModel, ForestModel)> {
    let cells = CellLabels::new(&mut rng::stream(rng::derive(seed, "tree-cells", 0), 0));
    let fit = |arm: u64, relabel: fn(u8) -> u8| -> Result<ForestModel> {
        let xs = rng::derive(seed, "tree-train-x", arm);
        let mut x = Vec::with_capacity(TREE_TRAIN_N * PIXELS);
        let mut y = Vec::with_capacity(TREE_TRAIN_N);
        for i in 0..TREE_TRAIN_N {
            let (_, px) = noisy_covariate(xs, i);
            y.push(relabel(cells.label(&px)) as f64);
            x.extend(px);
        }
        let cfg = ForestConfig {
            trees: TREE_COUNT,
            seed: rng::derive(seed, "tree-forest", arm),
            ..ForestConfig::default()
        };
        fit_forest(Features::new(&x, PIXELS)?, &y, &cfg)
    };
    Ok((fit(0, |l| l)?, fit(1, swap_label)?))
}

fn conv(g: &mut NetworkGraph, x: usize, name: &str, out: usize, inp: usize, k: usize, rng: &mut Rng) -> Result<usize> {
    let w = glorot_uniform(&[out, inp, k, k], inp * k * k, out * k * k, rng);
    let b = Tensor::new(vec![out], (0..out).map(|_| rng.random_range(-0.1..0.1)).collect())?;
    let w = g.param(&format!("{name}.weight"), w)?;
    let b = g.param(&format!("{name}.bias"), b)?;
    let y = g.conv2d(x, w, b)?;
    g.relu(y)
}

fn head(g: &mut NetworkGraph, x: usize, width: usize, rng: &mut Rng) -> Result<usize> {
    let flat = g.flatten(x)?;
    let w = g.param("head.weight", glorot_uniform(&[1, width], width, 1, rng))?;
    let b = g.param("head.bias", Tensor::zeros(vec![1]))?;
    let y = g.dense(flat, w, Some(b))?;
    g.set_output(y)?;
    Ok(y)
}

/// Two random convolutional nets mapping a `[n, 1, 32, 32]` image batch
/// (input `x`, raw pixel scale) to `[n, 1]`: a 3-conv stack for `f0` and a
/// 2-conv stack with 5×5 kernels for `f1`.
pub fn make_net_generator(seed: u64) -> Result<(NetworkGraph, NetworkGraph)> {
    let mut r0 = rng::stream(rng::derive(seed, "net-generator", 0), 0);
    let mut f0 = NetworkGraph::new();
    let x = f0.input("x");
    let s = f0.affine(x, 1.0 / 255.0, 0.0)?;
    let h = conv(&mut f0, s, "conv1", 4, 1, 3, &mut r0)?; // 30
    let h = conv(&mut f0, h, "conv2", 8, 4, 3, &mut r0)?; // 28
    let h = f0.maxpool2d(h, 2, PoolMode::Exact)?; // 14
    let h = conv(&mut f0, h, "conv3", 8, 8, 3, &mut r0)?; // 12
    let h = f0.maxpool2d(h, 2, PoolMode::Exact)?; // 6
    head(&mut f0, h, 8 * 6 * 6, &mut r0)?;

    let mut r1 = rng::stream(rng::derive(seed, "net-generator", 1), 0);
    let mut f1 = NetworkGraph::new();
    let x = f1.input("x");
    let s = f1.affine(x, 1.0 / 255.0, 0.0)?;
    let h = conv(&mut f1, s, "conv1", 6, 1, 5, &mut r1)?; // 28
    let h = f1.maxpool2d(h, 2, PoolMode::Exact)?; // 14
    let h = conv(&mut f1, h, "conv2", 8, 6, 5, &mut r1)?; // 10
    let h = f1.maxpool2d(h, 2, PoolMode::Exact)?; // 5
    head(&mut f1, h, 8 * 5 * 5, &mut r1)?;
    Ok((f0, f1))
}

/// Evaluates a single-output image network on `n` row-major 32×32 images.
pub fn eval_net(net: &NetworkGraph, images: &[f64]) -> Result<Vec<f64>> {
    const CHUNK: usize = 256;
    let mut g = net.clone();
    let mut out = Vec::with_capacity(images.len() / PIXELS);
    for chunk in images.chunks(CHUNK * PIXELS) {
        let n = chunk.len() / PIXELS;
        let x = Tensor::new(vec![n, 1, IMAGE_SIDE, IMAGE_SIDE], chunk.to_vec())?;
        out.extend_from_slice(g.forward(&[("x", &x)], Mode::Eval)?.data());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_swap_pairs_remainders() {
        for l in 1..=9u8 {
            assert_eq!(swap_label(l) % 5, l % 5);
            assert_eq!(swap_label(swap_label(l)), l);
        }
        assert_eq!(swap_label(5), 5);
        assert_eq!(swap_label(2), 7);
    }

    #[test]
    fn net_generators_are_deterministic_and_distinct() {
        let (a0, a1) = make_net_generator(3).unwrap();
        let (b0, _) = make_net_generator(3).unwrap();
        let imgs: Vec<f64> = (0..20).flat_map(|i| noisy_covariate(77, i).1).collect();
        let (p, q) = (eval_net(&a0, &imgs).unwrap(), eval_net(&b0, &imgs).unwrap());
        assert_eq!(p, q);
        let r = eval_net(&a1, &imgs).unwrap();
        assert!(p.iter().zip(&r).any(|(u, v)| u != v));
        assert!(p.iter().any(|&v| v != p[0]));
    }
}
