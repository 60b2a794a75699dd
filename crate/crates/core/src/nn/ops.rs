//! Row-level primitives shared by the batched forward passes and the
//! incremental (KV-cached) decoding path. Both paths call these with the same
//! operand order, so their results agree bit for bit.

/// `out = bias + x · W` for `W` of shape `[x.len(), out.len()]`.
pub fn linear_row(x: &[f64], weight: &[f64], bias: Option<&[f64]>, out: &mut [f64]) {
    let d_out = out.len();
    match bias {
        Some(b) => out.copy_from_slice(b),
        None => out.fill(0.0),
    }
    for (k, &xk) in x.iter().enumerate() {
        let w = &weight[k * d_out..(k + 1) * d_out];
        for (o, &wk) in out.iter_mut().zip(w) {
            *o += xk * wk;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Numerically stable in-place softmax.
pub fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
}

pub const LAYERNORM_EPS: f64 = 1e-5;

/// Normalizes `x` into `out`; returns the inverse standard deviation and
/// writes the normalized (pre-affine) values into `xhat`.
pub fn layernorm_row(x: &[f64], gamma: &[f64], beta: &[f64], xhat: &mut [f64], out: &mut [f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LAYERNORM_EPS).sqrt();
    for i in 0..x.len() {
        xhat[i] = (x[i] - mean) * inv;
        out[i] = gamma[i] * xhat[i] + beta[i];
    }
    inv
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
