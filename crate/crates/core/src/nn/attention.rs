//! Multi-head causal self-attention.
//!
//! The batched forward and the KV-cached step both go through
//! [`attend_row`], which reads query `t` and keys/values `0..=t` from a
//! buffer of fused `[q | k | v]` rows.

use rand::Rng;

use super::linear::Linear;
use super::ops::{dot, softmax_in_place};
use super::param::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct CausalAttention {
    pub qkv: Linear,
    pub out: Linear,
    pub dim: usize,
    pub heads: usize,
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    x: Tensor,
    qkv: Tensor,
    /// Per head, row-major `[T, T]`; only the lower triangle is used.
    probs: Vec<Vec<f64>>,
    ctx: Tensor,
}

/// Fused `[q | k | v]` rows of every position seen so far.
#[derive(Clone, Debug, Default)]
pub struct KvCache {
    rows: Vec<f64>,
    len: usize,
}

impl KvCache {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Attention output for query position `t`, written into `ctx` (width
/// `dim`). When `probs` is given, head `h`'s weights land in
/// `probs[h][0..=t]`.
pub fn attend_row(
    qkv_rows: &[f64],
    t: usize,
    dim: usize,
    heads: usize,
    ctx: &mut [f64],
    mut probs: Option<&mut [Vec<f64>]>,
) {
    let stride = 3 * dim;
    let dh = dim / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = &qkv_rows[t * stride..t * stride + dim];
    let mut scores = vec![0.0; t + 1];
    ctx.fill(0.0);
    for h in 0..heads {
        let qh = &q[h * dh..(h + 1) * dh];
        for (s, score) in scores.iter_mut().enumerate() {
            let k = &qkv_rows[s * stride + dim + h * dh..s * stride + dim + (h + 1) * dh];
            *score = dot(qh, k) * scale;
        }
        softmax_in_place(&mut scores);
        let ch = &mut ctx[h * dh..(h + 1) * dh];
        for (s, &p) in scores.iter().enumerate() {
            let v = &qkv_rows[s * stride + 2 * dim + h * dh..s * stride + 2 * dim + (h + 1) * dh];
            for (c, vv) in ch.iter_mut().zip(v) {
                *c += p * vv;
            }
        }
        if let Some(buf) = probs.as_deref_mut() {
            buf[h][..=t].copy_from_slice(&scores);
        }
    }
}

impl CausalAttention {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!(
                "attention width {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            qkv: Linear::new(store, &format!("{name}.qkv"), dim, 3 * dim, true, rng)?,
            out: Linear::new(store, &format!("{name}.out"), dim, dim, true, rng)?,
            dim,
            heads,
        })
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<(Tensor, AttentionCache)> {
        x.expect_width("attention input", self.dim)?;
        let n = x.rows();
        let qkv = self.qkv.forward(store, x)?;
        let mut ctx = Tensor::zeros(&[n, self.dim]);
        let mut probs = vec![vec![0.0; n * n]; self.heads];
        let mut row_probs = vec![vec![0.0; n]; self.heads];
        for t in 0..n {
            attend_row(
                qkv.data(),
                t,
                self.dim,
                self.heads,
                ctx.row_mut(t),
                Some(&mut row_probs),
            );
            for h in 0..self.heads {
                probs[h][t * n..t * n + t + 1].copy_from_slice(&row_probs[h][..=t]);
            }
        }
        let y = self.out.forward(store, &ctx)?;
        Ok((
            y,
            AttentionCache {
                x: x.clone(),
                qkv,
                probs,
                ctx,
            },
        ))
    }

    /// One incremental position: appends to `kv` and returns the output row.
    pub fn step(&self, store: &ParamStore, kv: &mut KvCache, x: &[f64], out: &mut [f64]) {
        let mut fused = vec![0.0; 3 * self.dim];
        self.qkv.forward_row(store, x, &mut fused);
        kv.rows.extend_from_slice(&fused);
        let t = kv.len;
        kv.len += 1;
        let mut ctx = vec![0.0; self.dim];
        attend_row(&kv.rows, t, self.dim, self.heads, &mut ctx, None);
        self.out.forward_row(store, &ctx, out);
    }

    pub fn backward(&self, store: &mut ParamStore, cache: &AttentionCache, dy: &Tensor) -> Result<Tensor> {
        let n = cache.x.rows();
        let d = self.dim;
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let dctx = self.out.backward(store, &cache.ctx, dy)?;
        let qkv = &cache.qkv;
        let mut dqkv = Tensor::zeros(&[n, 3 * d]);
        let mut dp = vec![0.0; n];
        for h in 0..self.heads {
            let probs = &cache.probs[h];
            let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
            for t in 0..n {
                let p = &probs[t * n..t * n + t + 1];
                let g = &dctx.row(t)[h * dh..(h + 1) * dh];
                let mut weighted = 0.0;
                for s in 0..=t {
                    dp[s] = dot(g, &qkv.row(s)[vo..vo + dh]);
                    weighted += p[s] * dp[s];
                    let dv = &mut dqkv.row_mut(s)[vo..vo + dh];
                    for (dvv, gg) in dv.iter_mut().zip(g) {
                        *dvv += p[s] * gg;
                    }
                }
                for s in 0..=t {
                    let ds = p[s] * (dp[s] - weighted) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for i in 0..dh {
                        let k = qkv.row(s)[ko + i];
                        let q = qkv.row(t)[qo + i];
                        dqkv.row_mut(t)[qo + i] += ds * k;
                        dqkv.row_mut(s)[ko + i] += ds * q;
                    }
                }
            }
        }
        self.qkv.backward(store, &cache.x, &dqkv)
    }
}
