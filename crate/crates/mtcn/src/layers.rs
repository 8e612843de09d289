//! Single-sample layer kernels on channel-major (`[c, h, w]`, width
//! fastest) activations. Every forward returns what its backward needs.

use crate::arch::{Chw, ConvSpec, LrnSpec, PoolSpec};

/// `c[m×n] += a[m×k] · b[k×n]`
pub(crate) fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += aip * bj;
            }
        }
    }
}

/// `c[m×n] += a[m×k] · b[n×k]ᵀ`
pub(crate) fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for (x, y) in arow.iter().zip(brow) {
                s += x * y;
            }
            c[i * n + j] += s;
        }
    }
}

/// `c[m×n] += a[k×m]ᵀ · b[k×n]`
pub(crate) fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a[p * m + i];
            if api == 0.0 {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += api * bj;
            }
        }
    }
}

/// Patch matrix with `c·k·k` rows and one column per output position.
pub(crate) fn im2col(x: &[f64], shape: Chw, spec: &ConvSpec, out: Chw) -> Vec<f64> {
    let [c, h, w] = shape;
    let (k, s, p) = (spec.kernel, spec.stride, spec.pad);
    let (oh, ow) = (out[1], out[2]);
    let cols = oh * ow;
    let mut m = vec![0.0; c * k * k * cols];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut m[row * cols..(row + 1) * cols];
                for oy in 0..oh {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &x[(ci * h + iy as usize) * w..(ci * h + iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * s + kx) as isize - p as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[oy * ow + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    m
}

/// Adjoint of [`im2col`]: scatter-adds patch gradients into the input.
pub(crate) fn col2im(m: &[f64], shape: Chw, spec: &ConvSpec, out: Chw) -> Vec<f64> {
    let [c, h, w] = shape;
    let (k, s, p) = (spec.kernel, spec.stride, spec.pad);
    let (oh, ow) = (out[1], out[2]);
    let cols = oh * ow;
    let mut x = vec![0.0; c * h * w];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &m[row * cols..(row + 1) * cols];
                for oy in 0..oh {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = (ci * h + iy as usize) * w;
                    for ox in 0..ow {
                        let ix = (ox * s + kx) as isize - p as isize;
                        if ix >= 0 && ix < w as isize {
                            x[base + ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Convolution on a precomputed patch matrix; `w` is `[out, in, k, k]`.
pub(crate) fn conv_forward(cols: &[f64], w: &[f64], b: &[f64], positions: usize) -> Vec<f64> {
    let out = b.len();
    let r = w.len() / out;
    let mut y = vec![0.0; out * positions];
    for (o, row) in y.chunks_mut(positions).enumerate() {
        row.fill(b[o]);
    }
    gemm_nn(out, r, positions, w, cols, &mut y);
    y
}

/// Accumulates weight and bias gradients and returns the patch gradient.
pub(crate) fn conv_backward(
    dy: &[f64],
    cols: &[f64],
    w: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    positions: usize,
) -> Vec<f64> {
    let out = db.len();
    let r = w.len() / out;
    gemm_nt(out, positions, r, dy, cols, dw);
    for (o, row) in dy.chunks(positions).enumerate() {
        db[o] += row.iter().sum::<f64>();
    }
    let mut dcols = vec![0.0; r * positions];
    gemm_tn(r, out, positions, w, dy, &mut dcols);
    dcols
}

pub(crate) fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v <= 0.0 {
            *v = 0.0;
        }
    }
}

/// Subgradient 1 for a strictly positive output, 0 otherwise.
pub(crate) fn relu_backward_inplace(dy: &mut [f64], y: &[f64]) {
    for (d, &v) in dy.iter_mut().zip(y) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
}

/// Returns the pooled maps and, per output cell, the flat input index of
/// the winning cell (first maximum on ties).
pub(crate) fn maxpool_forward(
    x: &[f64],
    shape: Chw,
    spec: &PoolSpec,
    out: Chw,
) -> (Vec<f64>, Vec<usize>) {
    let [c, h, w] = shape;
    let (oh, ow) = (out[1], out[2]);
    let mut y = vec![0.0; c * oh * ow];
    let mut arg = vec![0usize; c * oh * ow];
    for ci in 0..c {
        for oy in 0..oh {
            let y0 = (oy * spec.stride) as isize - spec.pad as isize;
            let ylo = y0.max(0) as usize;
            let yhi = ((y0 + spec.kernel as isize) as usize).min(h);
            for ox in 0..ow {
                let x0 = (ox * spec.stride) as isize - spec.pad as isize;
                let xlo = x0.max(0) as usize;
                let xhi = ((x0 + spec.kernel as isize) as usize).min(w);
                let mut best = f64::NEG_INFINITY;
                let mut at = 0;
                for iy in ylo..yhi {
                    for ix in xlo..xhi {
                        let idx = (ci * h + iy) * w + ix;
                        if x[idx] > best {
                            best = x[idx];
                            at = idx;
                        }
                    }
                }
                let o = (ci * oh + oy) * ow + ox;
                y[o] = best;
                arg[o] = at;
            }
        }
    }
    (y, arg)
}

pub(crate) fn maxpool_backward(dy: &[f64], arg: &[usize], input_len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; input_len];
    for (&d, &a) in dy.iter().zip(arg) {
        dx[a] += d;
    }
    dx
}

/// Returns the normalized maps and the per-cell denominators
/// `k + α/n · Σ x²` that backward reuses.
pub(crate) fn lrn_forward(x: &[f64], shape: Chw, spec: &LrnSpec) -> (Vec<f64>, Vec<f64>) {
    let [c, h, w] = shape;
    let plane = h * w;
    let half = spec.local_size / 2;
    let coef = spec.alpha / spec.local_size as f64;
    let mut scale = vec![spec.k; c * plane];
    for ci in 0..c {
        let lo = ci.saturating_sub(half);
        let hi = (ci + half).min(c - 1);
        for cj in lo..=hi {
            for q in 0..plane {
                let v = x[cj * plane + q];
                scale[ci * plane + q] += coef * v * v;
            }
        }
    }
    let y = x
        .iter()
        .zip(&scale)
        .map(|(&v, &s)| v * s.powf(-spec.beta))
        .collect();
    (y, scale)
}

pub(crate) fn lrn_backward(
    dy: &[f64],
    x: &[f64],
    y: &[f64],
    scale: &[f64],
    shape: Chw,
    spec: &LrnSpec,
) -> Vec<f64> {
    let [c, h, w] = shape;
    let plane = h * w;
    let half = spec.local_size / 2;
    let coef = 2.0 * spec.alpha * spec.beta / spec.local_size as f64;
    // t = dy · y / scale, then each channel collects t over its window.
    let t: Vec<f64> = dy
        .iter()
        .zip(y)
        .zip(scale)
        .map(|((d, v), s)| d * v / s)
        .collect();
    let mut dx: Vec<f64> = dy
        .iter()
        .zip(scale)
        .map(|(d, s)| d * s.powf(-spec.beta))
        .collect();
    for ci in 0..c {
        let lo = ci.saturating_sub(half);
        let hi = (ci + half).min(c - 1);
        for cj in lo..=hi {
            for q in 0..plane {
                dx[ci * plane + q] -= coef * x[ci * plane + q] * t[cj * plane + q];
            }
        }
    }
    dx
}

/// `y = W x + b` with `W` row-major `[out, in]`.
pub(crate) fn dense_forward(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    gemm_nn(b.len(), x.len(), 1, w, x, &mut y);
    y
}

pub(crate) fn dense_backward(
    dy: &[f64],
    x: &[f64],
    w: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let (out, inp) = (dy.len(), x.len());
    for o in 0..out {
        if dy[o] == 0.0 {
            continue;
        }
        db[o] += dy[o];
        for (g, &v) in dw[o * inp..(o + 1) * inp].iter_mut().zip(x) {
            *g += dy[o] * v;
        }
    }
    let mut dx = vec![0.0; inp];
    gemm_tn(inp, out, 1, w, dy, &mut dx);
    dx
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
