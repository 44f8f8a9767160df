//! Forward/backward pairs for the layer vocabulary used by every network:
//! dense affine maps, layer normalization with and without learned scale,
//! ELU/ReLU/tanh activations, and simplicial embeddings (group-wise softmax).
//!
//! Forward functions return whatever the matching backward needs as an
//! explicit cache; there is no implicit graph.

use super::tensor::Tensor;

/// Matches the normalization epsilon of the reference architecture.
pub const LAYER_NORM_EPS: f64 = 1e-5;

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Tensor,
}

/// `y = x · W + b` for `x: [batch, in]`, `W: [in, out]`, `b: [out]`.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> (Tensor, DenseCache) {
    let mut y = x.matmul(w);
    let bias = b.values();
    for r in 0..y.rows() {
        for (v, add) in y.row_mut(r).iter_mut().zip(bias) {
            *v += add;
        }
    }
    (y, DenseCache { input: x.clone() })
}

/// Returns `(dx, dw, db)` for upstream gradient `dy`.
pub fn dense_backward(cache: &DenseCache, w: &Tensor, dy: &Tensor) -> (Tensor, Tensor, Vec<f64>) {
    let dx = dy.matmul_nt(w);
    let dw = cache.input.matmul_tn(dy);
    let mut db = vec![0.0; dy.cols()];
    for r in 0..dy.rows() {
        for (acc, g) in db.iter_mut().zip(dy.row(r)) {
            *acc += g;
        }
    }
    (dx, dw, db)
}

// ---------------------------------------------------------------------------
// Layer normalization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

fn normalize_rows(x: &Tensor) -> (Tensor, LayerNormCache) {
    let (rows, cols) = (x.rows(), x.cols());
    let mut xhat = Tensor::zeros(&[rows, cols]);
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std[r] = inv;
        for (o, v) in xhat.row_mut(r).iter_mut().zip(row) {
            *o = (v - mean) * inv;
        }
    }
    let cache = LayerNormCache {
        xhat: xhat.clone(),
        inv_std,
    };
    (xhat, cache)
}

fn normalize_backward(cache: &LayerNormCache, d_xhat: &Tensor) -> Tensor {
    let (rows, cols) = (d_xhat.rows(), d_xhat.cols());
    let mut dx = Tensor::zeros(&[rows, cols]);
    for r in 0..rows {
        let xhat = cache.xhat.row(r);
        let dyr = d_xhat.row(r);
        let mean_dy = dyr.iter().sum::<f64>() / cols as f64;
        let mean_dy_xhat =
            dyr.iter().zip(xhat).map(|(d, h)| d * h).sum::<f64>() / cols as f64;
        let inv = cache.inv_std[r];
        for ((o, d), h) in dx.row_mut(r).iter_mut().zip(dyr).zip(xhat) {
            *o = inv * (d - mean_dy - h * mean_dy_xhat);
        }
    }
    dx
}

/// Normalization without learned parameters, applied per row.
pub fn layer_norm_forward(x: &Tensor) -> (Tensor, LayerNormCache) {
    normalize_rows(x)
}

pub fn layer_norm_backward(cache: &LayerNormCache, dy: &Tensor) -> Tensor {
    normalize_backward(cache, dy)
}

/// Normalization followed by a learned elementwise scale and shift.
pub fn affine_layer_norm_forward(
    x: &Tensor,
    scale: &[f64],
    shift: &[f64],
) -> (Tensor, LayerNormCache) {
    let (mut y, cache) = normalize_rows(x);
    for r in 0..y.rows() {
        for ((v, s), b) in y.row_mut(r).iter_mut().zip(scale).zip(shift) {
            *v = *v * s + b;
        }
    }
    (y, cache)
}

/// Returns `(dx, d_scale, d_shift)`.
pub fn affine_layer_norm_backward(
    cache: &LayerNormCache,
    scale: &[f64],
    dy: &Tensor,
) -> (Tensor, Vec<f64>, Vec<f64>) {
    let (rows, cols) = (dy.rows(), dy.cols());
    let mut d_scale = vec![0.0; cols];
    let mut d_shift = vec![0.0; cols];
    let mut d_xhat = Tensor::zeros(&[rows, cols]);
    for r in 0..rows {
        let xhat = cache.xhat.row(r);
        let dyr = dy.row(r);
        for c in 0..cols {
            d_scale[c] += dyr[c] * xhat[c];
            d_shift[c] += dyr[c];
            d_xhat.row_mut(r)[c] = dyr[c] * scale[c];
        }
    }
    let dx = normalize_backward(cache, &d_xhat);
    (dx, d_scale, d_shift)
}

// ---------------------------------------------------------------------------
// Activations (the forward output doubles as the backward cache)
// ---------------------------------------------------------------------------

/// Exponential linear unit with unit saturation, smooth at zero.
pub fn elu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    for v in y.values_mut() {
        if *v < 0.0 {
            *v = v.exp_m1();
        }
    }
    y
}

pub fn elu_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    for (d, o) in dx.values_mut().iter_mut().zip(y.values()) {
        if *o < 0.0 {
            *d *= o + 1.0;
        }
    }
    dx
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    for v in y.values_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    y
}

pub fn relu_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    for (d, o) in dx.values_mut().iter_mut().zip(y.values()) {
        if *o <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

pub fn tanh_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    for v in y.values_mut() {
        *v = v.tanh();
    }
    y
}

pub fn tanh_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    for (d, o) in dx.values_mut().iter_mut().zip(y.values()) {
        *d *= 1.0 - o * o;
    }
    dx
}

// ---------------------------------------------------------------------------
// Simplicial embedding: softmax over fixed-size groups of the last dimension
// ---------------------------------------------------------------------------

/// Reshapes each row into groups of `group` entries and applies a softmax
/// within each group, so every group of the output sums to one.
pub fn sem_forward(x: &Tensor, group: usize) -> Tensor {
    let (rows, cols) = (x.rows(), x.cols());
    assert!(group > 0 && cols % group == 0, "width {cols} not divisible into groups of {group}");
    let mut y = x.clone();
    for r in 0..rows {
        let row = y.row_mut(r);
        for chunk in row.chunks_mut(group) {
            let max = chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in chunk.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in chunk.iter_mut() {
                *v /= sum;
            }
        }
    }
    y
}

pub fn sem_backward(y: &Tensor, group: usize, dy: &Tensor) -> Tensor {
    let (rows, cols) = (y.rows(), y.cols());
    let mut dx = Tensor::zeros(&[rows, cols]);
    for r in 0..rows {
        let yr = y.row(r);
        let dyr = dy.row(r);
        let dxr = dx.row_mut(r);
        for g in (0..cols).step_by(group) {
            let dot: f64 = (g..g + group).map(|i| dyr[i] * yr[i]).sum();
            for i in g..g + group {
                dxr[i] = yr[i] * (dyr[i] - dot);
            }
        }
    }
    dx
}
