//! Layer primitives with their reverse-mode gradients. Forward functions
//! return whatever the matching backward needs; nothing is stored globally.

use super::{Real, Tensor};

fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Valid destination range along one axis for tap offset `t - pad`.
fn tap_range(t: usize, pad: usize, len: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(t);
    let hi = (len + pad).saturating_sub(t).min(len);
    (lo, hi.max(lo))
}

/// `y += x ⋆ k` with zero "same" padding on a `w × h` plane.
fn correlate_acc<T: Real>(x: &[T], k: &[T], y: &mut [T], w: usize, h: usize, ks: usize) {
    let pad = ks / 2;
    for a in 0..ks {
        let (i0, i1) = tap_range(a, pad, w);
        for b in 0..ks {
            let kv = k[a * ks + b];
            let (j0, j1) = tap_range(b, pad, h);
            for i in i0..i1 {
                let si = i + a - pad;
                let src = &x[si * h + j0 + b - pad..si * h + j1 + b - pad];
                axpy(kv, src, &mut y[i * h + j0..i * h + j1]);
            }
        }
    }
}

/// Gradient of [`correlate_acc`] with respect to its input.
fn correlate_back_input<T: Real>(dy: &[T], k: &[T], dx: &mut [T], w: usize, h: usize, ks: usize) {
    let pad = ks / 2;
    for a in 0..ks {
        let (i0, i1) = tap_range(a, pad, w);
        for b in 0..ks {
            let kv = k[a * ks + b];
            let (j0, j1) = tap_range(b, pad, h);
            for i in i0..i1 {
                let si = i + a - pad;
                let g = &dy[i * h + j0..i * h + j1];
                axpy(kv, g, &mut dx[si * h + j0 + b - pad..si * h + j1 + b - pad]);
            }
        }
    }
}

/// Gradient of [`correlate_acc`] with respect to its kernel.
fn correlate_back_kernel<T: Real>(dy: &[T], x: &[T], dk: &mut [T], w: usize, h: usize, ks: usize) {
    let pad = ks / 2;
    for a in 0..ks {
        let (i0, i1) = tap_range(a, pad, w);
        for b in 0..ks {
            let (j0, j1) = tap_range(b, pad, h);
            let mut acc = T::zero();
            for i in i0..i1 {
                let si = i + a - pad;
                acc += dot(&dy[i * h + j0..i * h + j1], &x[si * h + j0 + b - pad..si * h + j1 + b - pad]);
            }
            dk[a * ks + b] += acc;
        }
    }
}

/// Dense `ks × ks` convolution without bias; weights `[out][in][ks][ks]`.
pub fn conv_forward<T: Real>(x: &Tensor<T>, wt: &[T], co: usize, ks: usize) -> Tensor<T> {
    let mut y = Tensor::zeros(x.n, co, x.w, x.h);
    let kk = ks * ks;
    for b in 0..x.n {
        for o in 0..co {
            for i in 0..x.c {
                let k = &wt[(o * x.c + i) * kk..(o * x.c + i + 1) * kk];
                correlate_acc(x.plane(b, i), k, y.plane_mut(b, o), x.w, x.h, ks);
            }
        }
    }
    y
}

pub fn conv_backward<T: Real>(x: &Tensor<T>, wt: &[T], ks: usize, dy: &Tensor<T>, dw: &mut [T]) -> Tensor<T> {
    let mut dx = Tensor::zeros(x.n, x.c, x.w, x.h);
    let kk = ks * ks;
    for b in 0..x.n {
        for o in 0..dy.c {
            for i in 0..x.c {
                let r = (o * x.c + i) * kk..(o * x.c + i + 1) * kk;
                correlate_back_kernel(dy.plane(b, o), x.plane(b, i), &mut dw[r.clone()], x.w, x.h, ks);
                correlate_back_input(dy.plane(b, o), &wt[r], dx.plane_mut(b, i), x.w, x.h, ks);
            }
        }
    }
    dx
}

/// Per-channel `ks × ks` convolution without bias; weights `[c][ks][ks]`.
pub fn depthwise_forward<T: Real>(x: &Tensor<T>, wt: &[T], ks: usize) -> Tensor<T> {
    let mut y = Tensor::zeros(x.n, x.c, x.w, x.h);
    let kk = ks * ks;
    for b in 0..x.n {
        for c in 0..x.c {
            correlate_acc(x.plane(b, c), &wt[c * kk..(c + 1) * kk], y.plane_mut(b, c), x.w, x.h, ks);
        }
    }
    y
}

pub fn depthwise_backward<T: Real>(x: &Tensor<T>, wt: &[T], ks: usize, dy: &Tensor<T>, dw: &mut [T]) -> Tensor<T> {
    let mut dx = Tensor::zeros(x.n, x.c, x.w, x.h);
    let kk = ks * ks;
    for b in 0..x.n {
        for c in 0..x.c {
            let r = c * kk..(c + 1) * kk;
            correlate_back_kernel(dy.plane(b, c), x.plane(b, c), &mut dw[r.clone()], x.w, x.h, ks);
            correlate_back_input(dy.plane(b, c), &wt[r], dx.plane_mut(b, c), x.w, x.h, ks);
        }
    }
    dx
}

/// 1×1 convolution; weights `[out][in]`, optional bias `[out]`.
pub fn pointwise_forward<T: Real>(x: &Tensor<T>, wt: &[T], bias: Option<&[T]>, co: usize) -> Tensor<T> {
    let mut y = Tensor::zeros(x.n, co, x.w, x.h);
    for b in 0..x.n {
        for o in 0..co {
            let out = y.plane_mut(b, o);
            if let Some(bias) = bias {
                out.iter_mut().for_each(|v| *v = bias[o]);
            }
            for i in 0..x.c {
                axpy(wt[o * x.c + i], x.plane(b, i), out);
            }
        }
    }
    y
}

pub fn pointwise_backward<T: Real>(
    x: &Tensor<T>,
    wt: &[T],
    dy: &Tensor<T>,
    dw: &mut [T],
    db: Option<&mut [T]>,
) -> Tensor<T> {
    let mut dx = Tensor::zeros(x.n, x.c, x.w, x.h);
    for b in 0..x.n {
        for o in 0..dy.c {
            let g = dy.plane(b, o);
            for i in 0..x.c {
                dw[o * x.c + i] += dot(g, x.plane(b, i));
                axpy(wt[o * x.c + i], g, dx.plane_mut(b, i));
            }
        }
    }
    if let Some(db) = db {
        for b in 0..dy.n {
            for (o, d) in db.iter_mut().enumerate() {
                let mut s = T::zero();
                for &v in dy.plane(b, o) {
                    s += v;
                }
                *d += s;
            }
        }
    }
    dx
}

/// Batch statistics and normalized activations of a batch-norm layer.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<f64>,
    /// Unbiased batch variance, for the running estimate.
    pub var_unbiased: Vec<f64>,
    pub training: bool,
}

/// Per-channel batch normalization. Training mode normalizes by batch
/// statistics; otherwise by the supplied running estimates.
pub fn batchnorm_forward<T: Real>(
    x: &Tensor<T>,
    scale: &[T],
    shift: &[T],
    running: (&[T], &[T]),
    eps: f64,
    training: bool,
) -> (Tensor<T>, BnCache<T>) {
    let m = x.n * x.plane_len();
    let mut xhat = Tensor::zeros(x.n, x.c, x.w, x.h);
    let mut y = Tensor::zeros(x.n, x.c, x.w, x.h);
    let mut inv_std = Vec::with_capacity(x.c);
    let mut means = Vec::with_capacity(x.c);
    let mut vars = Vec::with_capacity(x.c);
    for c in 0..x.c {
        let (mean, var) = if training {
            let mut s = 0.0f64;
            for b in 0..x.n {
                s += x.plane(b, c).iter().map(|v| v.to_f64().unwrap_or(0.0)).sum::<f64>();
            }
            let mean = s / m as f64;
            let mut ss = 0.0f64;
            for b in 0..x.n {
                ss += x.plane(b, c).iter().map(|v| (v.to_f64().unwrap_or(0.0) - mean).powi(2)).sum::<f64>();
            }
            means.push(mean);
            vars.push(if m > 1 { ss / (m - 1) as f64 } else { 0.0 });
            (mean, ss / m as f64)
        } else {
            (running.0[c].to_f64().unwrap_or(0.0), running.1[c].to_f64().unwrap_or(1.0))
        };
        let is = T::from_f64(1.0 / (var + eps).sqrt()).unwrap_or(T::one());
        let mu = T::from_f64(mean).unwrap_or(T::zero());
        inv_std.push(is);
        for b in 0..x.n {
            let src = x.plane(b, c);
            let xh = xhat.plane_mut(b, c);
            let out = y.plane_mut(b, c);
            for ((o, h), &v) in out.iter_mut().zip(xh.iter_mut()).zip(src) {
                *h = (v - mu) * is;
                *o = scale[c] * *h + shift[c];
            }
        }
    }
    (
        y,
        BnCache {
            xhat,
            inv_std,
            mean: means,
            var_unbiased: vars,
            training,
        },
    )
}

pub fn batchnorm_backward<T: Real>(
    cache: &BnCache<T>,
    scale: &[T],
    dy: &Tensor<T>,
    dscale: &mut [T],
    dshift: &mut [T],
) -> Tensor<T> {
    let xh = &cache.xhat;
    let m = T::from_usize(dy.n * dy.plane_len()).unwrap_or(T::one());
    let mut dx = Tensor::zeros(dy.n, dy.c, dy.w, dy.h);
    for c in 0..dy.c {
        let mut sum_dy = T::zero();
        let mut sum_dy_xh = T::zero();
        for b in 0..dy.n {
            for (&g, &x) in dy.plane(b, c).iter().zip(xh.plane(b, c)) {
                sum_dy += g;
                sum_dy_xh += g * x;
            }
        }
        dscale[c] += sum_dy_xh;
        dshift[c] += sum_dy;
        let k = scale[c] * cache.inv_std[c];
        let (mean_dy, mean_dy_xh) = (sum_dy / m, sum_dy_xh / m);
        for b in 0..dy.n {
            let g = dy.plane(b, c);
            let x = xh.plane(b, c);
            let out = dx.plane_mut(b, c);
            if cache.training {
                for ((o, &gv), &xv) in out.iter_mut().zip(g).zip(x) {
                    *o = k * (gv - mean_dy - xv * mean_dy_xh);
                }
            } else {
                for (o, &gv) in out.iter_mut().zip(g) {
                    *o = k * gv;
                }
            }
        }
    }
    dx
}

pub fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    Tensor {
        data: x.data.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect(),
        ..*x
    }
}

/// Gradient through a ReLU given its output.
pub fn relu_backward<T: Real>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    Tensor {
        data: y
            .data
            .iter()
            .zip(&dy.data)
            .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
            .collect(),
        ..*dy
    }
}

fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// Squeeze-and-excite parameters: reduce `[r][c]` + bias `[r]`, expand
/// `[c][r]` + bias `[c]`.
pub struct SeWeights<'a, T> {
    pub w1: &'a [T],
    pub b1: &'a [T],
    pub w2: &'a [T],
    pub b2: &'a [T],
    pub r: usize,
}

#[derive(Debug, Clone)]
pub struct SeCache<T> {
    pub pooled: Vec<T>,
    pub hidden: Vec<T>,
    pub gates: Vec<T>,
}

/// Channel gating from globally averaged features.
pub fn se_forward<T: Real>(x: &Tensor<T>, p: &SeWeights<T>) -> (Tensor<T>, SeCache<T>) {
    let (n, c, r) = (x.n, x.c, p.r);
    let inv = T::one() / T::from_usize(x.plane_len()).unwrap_or(T::one());
    let mut pooled = vec![T::zero(); n * c];
    let mut hidden = vec![T::zero(); n * r];
    let mut gates = vec![T::zero(); n * c];
    let mut y = Tensor::zeros(n, c, x.w, x.h);
    for b in 0..n {
        for ch in 0..c {
            let mut s = T::zero();
            for &v in x.plane(b, ch) {
                s += v;
            }
            pooled[b * c + ch] = s * inv;
        }
        for k in 0..r {
            let z = p.b1[k] + dot(&p.w1[k * c..(k + 1) * c], &pooled[b * c..(b + 1) * c]);
            hidden[b * r + k] = if z > T::zero() { z } else { T::zero() };
        }
        for ch in 0..c {
            let z = p.b2[ch] + dot(&p.w2[ch * r..(ch + 1) * r], &hidden[b * r..(b + 1) * r]);
            let g = sigmoid(z);
            gates[b * c + ch] = g;
            for (o, &v) in y.plane_mut(b, ch).iter_mut().zip(x.plane(b, ch)) {
                *o = v * g;
            }
        }
    }
    (y, SeCache { pooled, hidden, gates })
}

/// Gradients for the four squeeze-and-excite tensors, in parameter order.
pub struct SeGrads<'a, T> {
    pub w1: &'a mut [T],
    pub b1: &'a mut [T],
    pub w2: &'a mut [T],
    pub b2: &'a mut [T],
}

pub fn se_backward<T: Real>(
    x: &Tensor<T>,
    cache: &SeCache<T>,
    p: &SeWeights<T>,
    dy: &Tensor<T>,
    g: SeGrads<T>,
) -> Tensor<T> {
    let (n, c, r) = (x.n, x.c, p.r);
    let inv = T::one() / T::from_usize(x.plane_len()).unwrap_or(T::one());
    let mut dx = Tensor::zeros(n, c, x.w, x.h);
    for b in 0..n {
        let mut dz2 = vec![T::zero(); c];
        for ch in 0..c {
            let gate = cache.gates[b * c + ch];
            let dgate = dot(dy.plane(b, ch), x.plane(b, ch));
            dz2[ch] = dgate * gate * (T::one() - gate);
        }
        let mut dhidden = vec![T::zero(); r];
        for ch in 0..c {
            g.b2[ch] += dz2[ch];
            for k in 0..r {
                g.w2[ch * r + k] += dz2[ch] * cache.hidden[b * r + k];
                dhidden[k] += dz2[ch] * p.w2[ch * r + k];
            }
        }
        let mut dpooled = vec![T::zero(); c];
        for k in 0..r {
            if cache.hidden[b * r + k] <= T::zero() {
                continue;
            }
            let dz1 = dhidden[k];
            g.b1[k] += dz1;
            for ch in 0..c {
                g.w1[k * c + ch] += dz1 * cache.pooled[b * c + ch];
                dpooled[ch] += dz1 * p.w1[k * c + ch];
            }
        }
        for ch in 0..c {
            let gate = cache.gates[b * c + ch];
            let add = dpooled[ch] * inv;
            for (o, &gv) in dx.plane_mut(b, ch).iter_mut().zip(dy.plane(b, ch)) {
                *o = gv * gate + add;
            }
        }
    }
    dx
}

/// Non-overlapping max pooling with kernel and stride `(kw, kh)`. Returns
/// the winning source offset of each output cell.
pub fn maxpool_forward<T: Real>(x: &Tensor<T>, kw: usize, kh: usize) -> (Tensor<T>, Vec<u32>) {
    let (w2, h2) = (x.w / kw, x.h / kh);
    let mut y = Tensor::zeros(x.n, x.c, w2, h2);
    let mut arg = vec![0u32; x.n * x.c * w2 * h2];
    for b in 0..x.n {
        for c in 0..x.c {
            let src = x.plane(b, c);
            let base = (b * x.c + c) * w2 * h2;
            for i in 0..w2 {
                for j in 0..h2 {
                    let mut best = (i * kw) * x.h + j * kh;
                    for a in 0..kw {
                        for d in 0..kh {
                            let k = (i * kw + a) * x.h + j * kh + d;
                            if src[k] > src[best] {
                                best = k;
                            }
                        }
                    }
                    y.data[base + i * h2 + j] = src[best];
                    arg[base + i * h2 + j] = best as u32;
                }
            }
        }
    }
    (y, arg)
}

pub fn maxpool_backward<T: Real>(arg: &[u32], dy: &Tensor<T>, shape: [usize; 4]) -> Tensor<T> {
    let [n, c, w, h] = shape;
    let mut dx = Tensor::zeros(n, c, w, h);
    let p = dy.plane_len();
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * p;
            let out = dx.plane_mut(b, ch);
            for k in 0..p {
                out[arg[base + k] as usize] += dy.data[base + k];
            }
        }
    }
    dx
}

/// Source taps `(i0, i1, frac)` for half-pixel-centred linear upsampling.
fn upsample_taps(len_in: usize, scale: usize) -> Vec<(usize, usize, f64)> {
    (0..len_in * scale)
        .map(|o| {
            let src = ((o as f64 + 0.5) / scale as f64 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len_in - 1);
            let i1 = (i0 + 1).min(len_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear upsampling by integer factors with half-pixel alignment.
pub fn upsample_forward<T: Real>(x: &Tensor<T>, sw: usize, sh: usize) -> Tensor<T> {
    let tw = upsample_taps(x.w, sw);
    let th = upsample_taps(x.h, sh);
    let (w2, h2) = (x.w * sw, x.h * sh);
    let mut y = Tensor::zeros(x.n, x.c, w2, h2);
    let fw: Vec<T> = tw.iter().map(|t| T::from_f64(t.2).unwrap_or(T::zero())).collect();
    let fh: Vec<T> = th.iter().map(|t| T::from_f64(t.2).unwrap_or(T::zero())).collect();
    for b in 0..x.n {
        for c in 0..x.c {
            let src = x.plane(b, c);
            let out = y.plane_mut(b, c);
            for (p, &(a0, a1, _)) in tw.iter().enumerate() {
                let (la, ua) = (T::one() - fw[p], fw[p]);
                for (q, &(b0, b1, _)) in th.iter().enumerate() {
                    let (lb, ub) = (T::one() - fh[q], fh[q]);
                    out[p * h2 + q] = la * (lb * src[a0 * x.h + b0] + ub * src[a0 * x.h + b1])
                        + ua * (lb * src[a1 * x.h + b0] + ub * src[a1 * x.h + b1]);
                }
            }
        }
    }
    y
}

pub fn upsample_backward<T: Real>(dy: &Tensor<T>, shape: [usize; 4], sw: usize, sh: usize) -> Tensor<T> {
    let [n, c, w, h] = shape;
    let tw = upsample_taps(w, sw);
    let th = upsample_taps(h, sh);
    let fw: Vec<T> = tw.iter().map(|t| T::from_f64(t.2).unwrap_or(T::zero())).collect();
    let fh: Vec<T> = th.iter().map(|t| T::from_f64(t.2).unwrap_or(T::zero())).collect();
    let h2 = h * sh;
    let mut dx = Tensor::zeros(n, c, w, h);
    for b in 0..n {
        for ch in 0..c {
            let g = dy.plane(b, ch);
            let out = dx.plane_mut(b, ch);
            for (p, &(a0, a1, _)) in tw.iter().enumerate() {
                let (la, ua) = (T::one() - fw[p], fw[p]);
                for (q, &(b0, b1, _)) in th.iter().enumerate() {
                    let (lb, ub) = (T::one() - fh[q], fh[q]);
                    let v = g[p * h2 + q];
                    out[a0 * h + b0] += la * lb * v;
                    out[a0 * h + b1] += la * ub * v;
                    out[a1 * h + b0] += ua * lb * v;
                    out[a1 * h + b1] += ua * ub * v;
                }
            }
        }
    }
    dx
}

/// Channel concatenation of two batches with equal spatial shape.
pub fn concat<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let c = a.c + b.c;
    let mut y = Tensor::zeros(a.n, c, a.w, a.h);
    for s in 0..a.n {
        for ch in 0..a.c {
            y.plane_mut(s, ch).copy_from_slice(a.plane(s, ch));
        }
        for ch in 0..b.c {
            y.plane_mut(s, a.c + ch).copy_from_slice(b.plane(s, ch));
        }
    }
    y
}

/// Inverse of [`concat`] for gradients.
pub fn split<T: Real>(d: &Tensor<T>, ca: usize) -> (Tensor<T>, Tensor<T>) {
    let mut a = Tensor::zeros(d.n, ca, d.w, d.h);
    let mut b = Tensor::zeros(d.n, d.c - ca, d.w, d.h);
    for s in 0..d.n {
        for ch in 0..d.c {
            if ch < ca {
                a.plane_mut(s, ch).copy_from_slice(d.plane(s, ch));
            } else {
                b.plane_mut(s, ch - ca).copy_from_slice(d.plane(s, ch));
            }
        }
    }
    (a, b)
}

#[cfg(test)]
mod tests;
