//! Reference implementations shared by the oracle and acceptance suites.
#![allow(dead_code)]

use cate_core::baselines::TreeNode;
use cate_core::diverter::{control_gate, treated_gate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn uniform(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

pub fn conv_loops(x: &[f64], xs: [usize; 4], k: &[f64], ks: [usize; 4], b: &[f64]) -> Vec<f64> {
    let [n, c, h, w] = xs;
    let [o, _, kh, kw] = ks;
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut y = vec![0.0; n * o * oh * ow];
    for bi in 0..n {
        for oc in 0..o {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = b[oc];
                    for ic in 0..c {
                        for u in 0..kh {
                            for v in 0..kw {
                                acc += x[((bi * c + ic) * h + i + u) * w + j + v] * k[((oc * c + ic) * kh + u) * kw + v];
                            }
                        }
                    }
                    y[((bi * o + oc) * oh + i) * ow + j] = acc;
                }
            }
        }
    }
    y
}

pub fn pool_loops(x: &[f64], xs: [usize; 4], k: usize) -> Vec<f64> {
    let [n, c, h, w] = xs;
    let (oh, ow) = (h / k, w / k);
    let mut y = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        for i in 0..oh {
            for j in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for u in 0..k {
                    for v in 0..k {
                        m = m.max(x[(plane * h + i * k + u) * w + j * k + v]);
                    }
                }
                y.push(m);
            }
        }
    }
    y
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Walks the preorder node list without going through the tree's own code.
pub fn walk(nodes: &[TreeNode], x: &[f64]) -> f64 {
    let mut at = 0;
    loop {
        match nodes[at] {
            TreeNode::Leaf { value, .. } => return value,
            TreeNode::Split { feature, threshold, right } => at = if x[feature] <= threshold { at + 1 } else { right },
        }
    }
}

/// Rank-deficient designs up to 20 × 30: wide ones, and tall ones with
/// repeated or combined columns.
pub fn deficient_design(r: &mut ChaCha8Rng, m: usize, n: usize, dependent: bool) -> Vec<f64> {
    let mut a = uniform(r, m * n);
    if dependent {
        for i in 0..m {
            a[i * n + n - 1] = a[i * n];
            a[i * n + n - 2] = a[i * n + 1] - 2.0 * a[i * n + 2];
        }
    }
    a
}


pub const LIPSCHITZ: f64 = 0.25;

/// Counts violations over `draws` random `(f, t, t')` triples.
pub fn diverter_violations(draws: usize, seed: u64) -> usize {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..draws {
        let f: f64 = r.random_range(-12.0..12.0);
        let (t, t2) = if r.random_bool(0.5) {
            (r.random_range(0.0..1.0), r.random_range(0.0..1.0))
        } else {
            (0.0, 1.0)
        };
        let (c, tr) = (control_gate(f + t), treated_gate(f + t));
        bad += usize::from(!(0.0..=0.5).contains(&c));
        bad += usize::from(!(0.5..1.0).contains(&tr));
        let (c2, tr2) = (control_gate(f + t2), treated_gate(f + t2));
        let (lo, hi) = if t <= t2 { ((c, tr), (c2, tr2)) } else { ((c2, tr2), (c, tr)) };
        // The control gate never rises and the treatment gate never falls in f + t.
        bad += usize::from(hi.0 > lo.0 || hi.1 < lo.1);
        let dt = (t - t2).abs();
        bad += usize::from((c - c2).abs() > LIPSCHITZ * dt || (tr - tr2).abs() > LIPSCHITZ * dt);
    }
    bad
}

