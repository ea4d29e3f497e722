//! Forward and backward kernels for the primitive set.
//!
//! Image tensors are `[batch, channels, height, width]`; the free-standing
//! wrappers in [`super`] also accept unbatched `[channels, height, width]`.

use crate::error::{Error, Result};

use super::Tensor;

pub const BATCHNORM_EPS: f64 = 1e-5;
pub const BATCHNORM_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvDims {
    pub fn out_h(&self) -> usize {
        self.h - self.kh + 1
    }
    pub fn out_w(&self) -> usize {
        self.w - self.kw + 1
    }
}

pub(crate) fn conv_dims(node: &str, x: &[usize], k: &[usize], b: &[usize]) -> Result<ConvDims> {
    if x.len() != 4 {
        return Err(Error::shape(node, format!("conv input must be [n,c,h,w], got {x:?}")));
    }
    if k.len() != 4 {
        return Err(Error::shape(node, format!("conv kernel must be [o,c,kh,kw], got {k:?}")));
    }
    let dims = ConvDims {
        n: x[0],
        c: x[1],
        h: x[2],
        w: x[3],
        o: k[0],
        kh: k[2],
        kw: k[3],
    };
    if k[1] != dims.c {
        return Err(Error::shape(
            node,
            format!("kernel expects {} input channels, input has {}", k[1], dims.c),
        ));
    }
    if dims.kh > dims.h || dims.kw > dims.w {
        return Err(Error::shape(
            node,
            format!("kernel {}x{} larger than input {}x{}", dims.kh, dims.kw, dims.h, dims.w),
        ));
    }
    if b.iter().product::<usize>() != dims.o {
        return Err(Error::shape(node, format!("bias {b:?} does not match {} output channels", dims.o)));
    }
    Ok(dims)
}

pub(crate) fn conv2d_forward(d: ConvDims, x: &[f64], k: &[f64], b: &[f64]) -> Vec<f64> {
    let (oh, ow) = (d.out_h(), d.out_w());
    let mut out = vec![0.0; d.n * d.o * oh * ow];
    for n in 0..d.n {
        for o in 0..d.o {
            let plane = &mut out[(n * d.o + o) * oh * ow..][..oh * ow];
            plane.fill(b[o]);
            for c in 0..d.c {
                let src = &x[(n * d.c + c) * d.h * d.w..][..d.h * d.w];
                for ky in 0..d.kh {
                    for kx in 0..d.kw {
                        let wv = k[((o * d.c + c) * d.kh + ky) * d.kw + kx];
                        for y in 0..oh {
                            let row = &src[(y + ky) * d.w + kx..][..ow];
                            let dst = &mut plane[y * ow..][..ow];
                            for (acc, &v) in dst.iter_mut().zip(row) {
                                *acc += wv * v;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns `(d_input, d_kernel, d_bias)`.
pub(crate) fn conv2d_backward(
    d: ConvDims,
    x: &[f64],
    k: &[f64],
    dy: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (oh, ow) = (d.out_h(), d.out_w());
    let mut dx = vec![0.0; x.len()];
    let mut dk = vec![0.0; k.len()];
    let mut db = vec![0.0; d.o];
    for n in 0..d.n {
        for o in 0..d.o {
            let g = &dy[(n * d.o + o) * oh * ow..][..oh * ow];
            db[o] += g.iter().sum::<f64>();
            for c in 0..d.c {
                let base = (n * d.c + c) * d.h * d.w;
                for ky in 0..d.kh {
                    for kx in 0..d.kw {
                        let kidx = ((o * d.c + c) * d.kh + ky) * d.kw + kx;
                        let wv = k[kidx];
                        let mut acc = 0.0;
                        for y in 0..oh {
                            let off = base + (y + ky) * d.w + kx;
                            let grow = &g[y * ow..][..ow];
                            let xrow = &x[off..][..ow];
                            for (&gv, &xv) in grow.iter().zip(xrow) {
                                acc += gv * xv;
                            }
                            let dxrow = &mut dx[off..][..ow];
                            for (dv, &gv) in dxrow.iter_mut().zip(grow) {
                                *dv += gv * wv;
                            }
                        }
                        dk[kidx] += acc;
                    }
                }
            }
        }
    }
    (dx, dk, db)
}

/// How a pooling window treats extents that are not a multiple of the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    /// Extent must divide evenly.
    Exact,
    /// Trailing rows and columns that do not fill a window are dropped.
    Floor,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PoolDims {
    pub planes: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

impl PoolDims {
    pub fn out_h(&self) -> usize {
        self.h / self.k
    }
    pub fn out_w(&self) -> usize {
        self.w / self.k
    }
}

pub(crate) fn pool_dims(node: &str, x: &[usize], k: usize, mode: PoolMode) -> Result<PoolDims> {
    if x.len() != 4 {
        return Err(Error::shape(node, format!("pool input must be [n,c,h,w], got {x:?}")));
    }
    if k == 0 || k > x[2] || k > x[3] {
        return Err(Error::shape(node, format!("window {k} does not fit {}x{}", x[2], x[3])));
    }
    if mode == PoolMode::Exact && (!x[2].is_multiple_of(k) || !x[3].is_multiple_of(k)) {
        return Err(Error::shape(
            node,
            format!("extent {}x{} is not divisible by window {k}", x[2], x[3]),
        ));
    }
    Ok(PoolDims {
        planes: x[0] * x[1],
        h: x[2],
        w: x[3],
        k,
    })
}

/// Returns pooled values, the flat input index of each window's first
/// row-major maximum, and the smallest gap between a window maximum and its
/// runner-up (a proxy for distance to an argmax switch).
pub(crate) fn maxpool_forward(d: PoolDims, x: &[f64]) -> (Vec<f64>, Vec<usize>, f64) {
    let (oh, ow) = (d.out_h(), d.out_w());
    let mut out = Vec::with_capacity(d.planes * oh * ow);
    let mut arg = Vec::with_capacity(d.planes * oh * ow);
    let mut min_gap = f64::INFINITY;
    for p in 0..d.planes {
        let base = p * d.h * d.w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut second = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dy in 0..d.k {
                    for dx in 0..d.k {
                        let idx = base + (oy * d.k + dy) * d.w + ox * d.k + dx;
                        let v = x[idx];
                        if v > best {
                            second = best;
                            best = v;
                            best_idx = idx;
                        } else if v > second {
                            second = v;
                        }
                    }
                }
                if d.k > 1 {
                    min_gap = min_gap.min(best - second);
                }
                out.push(best);
                arg.push(best_idx);
            }
        }
    }
    (out, arg, min_gap)
}

pub(crate) fn maxpool_backward(input_len: usize, argmax: &[usize], dy: &[f64]) -> Vec<f64> {
    let mut dx = vec![0.0; input_len];
    for (&idx, &g) in argmax.iter().zip(dy) {
        dx[idx] += g;
    }
    dx
}

/// Layout of a tensor seen as `[batch, channels, spatial]` with stats taken
/// per channel over batch and spatial positions.
#[derive(Debug, Clone, Copy)]
pub(crate) struct NormDims {
    pub n: usize,
    pub c: usize,
    pub s: usize,
}

impl NormDims {
    pub fn count(&self) -> usize {
        self.n * self.s
    }
}

pub(crate) fn norm_dims(node: &str, x: &[usize], gamma: &[usize], beta: &[usize]) -> Result<NormDims> {
    if x.len() < 2 {
        return Err(Error::shape(node, format!("batchnorm input must be [batch, features, ...], got {x:?}")));
    }
    let c = x[1];
    let gn: usize = gamma.iter().product();
    let bn: usize = beta.iter().product();
    if gn != c || bn != c {
        return Err(Error::shape(
            node,
            format!("gamma {gamma:?} / beta {beta:?} do not match {c} features"),
        ));
    }
    Ok(NormDims {
        n: x[0],
        c,
        s: x[2..].iter().product(),
    })
}

pub(crate) fn for_each_channel(d: NormDims, mut f: impl FnMut(usize, usize)) {
    for n in 0..d.n {
        for c in 0..d.c {
            let start = (n * d.c + c) * d.s;
            for i in start..start + d.s {
                f(c, i);
            }
        }
    }
}

/// Training-mode forward. Returns `(output, x_hat, inv_std, batch_mean, batch_var)`.
pub(crate) fn batchnorm_train_forward(
    d: NormDims,
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let m = d.count() as f64;
    let mut mean = vec![0.0; d.c];
    for_each_channel(d, |c, i| mean[c] += x[i]);
    mean.iter_mut().for_each(|v| *v /= m);
    let mut var = vec![0.0; d.c];
    for_each_channel(d, |c, i| {
        let z = x[i] - mean[c];
        var[c] += z * z;
    });
    var.iter_mut().for_each(|v| *v /= m);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BATCHNORM_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for_each_channel(d, |c, i| {
        xhat[i] = (x[i] - mean[c]) * inv_std[c];
        out[i] = gamma[c] * xhat[i] + beta[c];
    });
    (out, xhat, inv_std, mean, var)
}

pub(crate) fn batchnorm_eval_forward(
    d: NormDims,
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let inv_std: Vec<f64> = running_var
        .iter()
        .map(|v| 1.0 / (v + BATCHNORM_EPS).sqrt())
        .collect();
    let mut xhat = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for_each_channel(d, |c, i| {
        xhat[i] = (x[i] - running_mean[c]) * inv_std[c];
        out[i] = gamma[c] * xhat[i] + beta[c];
    });
    (out, xhat, inv_std)
}

/// Returns `(d_input, d_gamma, d_beta)`. `batch_stats` selects the
/// training-mode derivative (statistics depend on the input) versus the
/// inference-mode one (statistics are constants).
pub(crate) fn batchnorm_backward(
    d: NormDims,
    xhat: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    dy: &[f64],
    batch_stats: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dgamma = vec![0.0; d.c];
    let mut dbeta = vec![0.0; d.c];
    for_each_channel(d, |c, i| {
        dgamma[c] += dy[i] * xhat[i];
        dbeta[c] += dy[i];
    });
    let mut dx = vec![0.0; dy.len()];
    if batch_stats {
        let m = d.count() as f64;
        // sum(dxhat) = gamma * dbeta, sum(dxhat * xhat) = gamma * dgamma
        for_each_channel(d, |c, i| {
            let dxhat = dy[i] * gamma[c];
            dx[i] = inv_std[c] / m
                * (m * dxhat - gamma[c] * dbeta[c] - xhat[i] * gamma[c] * dgamma[c]);
        });
    } else {
        for_each_channel(d, |c, i| dx[i] = dy[i] * gamma[c] * inv_std[c]);
    }
    (dx, dgamma, dbeta)
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// `x [n, in] · wᵀ [in, out] + b`.
pub(crate) fn dense_forward(n: usize, inp: usize, out: usize, x: &[f64], w: &[f64], b: Option<&[f64]>) -> Vec<f64> {
    let mut y = vec![0.0; n * out];
    for r in 0..n {
        let xr = &x[r * inp..][..inp];
        for o in 0..out {
            let wr = &w[o * inp..][..inp];
            let mut acc = b.map_or(0.0, |b| b[o]);
            for (&a, &c) in xr.iter().zip(wr) {
                acc += a * c;
            }
            y[r * out + o] = acc;
        }
    }
    y
}

/// Returns `(d_input, d_weight, d_bias)`.
pub(crate) fn dense_backward(
    n: usize,
    inp: usize,
    out: usize,
    x: &[f64],
    w: &[f64],
    dy: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; n * inp];
    let mut dw = vec![0.0; out * inp];
    let mut db = vec![0.0; out];
    for r in 0..n {
        let xr = &x[r * inp..][..inp];
        let dxr = &mut dx[r * inp..][..inp];
        for o in 0..out {
            let g = dy[r * out + o];
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            let wr = &w[o * inp..][..inp];
            let dwr = &mut dw[o * inp..][..inp];
            for i in 0..inp {
                dxr[i] += g * wr[i];
                dwr[i] += g * xr[i];
            }
        }
    }
    (dx, dw, db)
}

pub(crate) fn check_finite(node: &str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { node: node.to_string() })
    }
}

pub(crate) fn batched4(t: &Tensor) -> Vec<usize> {
    if t.rank() == 3 {
        let mut s = vec![1];
        s.extend_from_slice(t.shape());
        s
    } else {
        t.shape().to_vec()
    }
}
