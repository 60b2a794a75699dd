//! Pre-norm decoder-only transformer stack shared by the micro LM and the
//! speech decoder.

use rand::Rng;

use super::attention::{AttentionCache, CausalAttention, KvCache};
use super::ffn::{FeedForward, FeedForwardCache};
use super::layernorm::{LayerNorm, LayerNormCache};
use super::param::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransformerConfig {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    pub max_len: usize,
}

#[derive(Clone, Debug)]
pub struct Block {
    pub ln1: LayerNorm,
    pub attn: CausalAttention,
    pub ln2: LayerNorm,
    pub ffn: FeedForward,
}

#[derive(Clone, Debug)]
struct BlockCache {
    ln1: LayerNormCache,
    attn: AttentionCache,
    ln2: LayerNormCache,
    ffn: FeedForwardCache,
}

#[derive(Clone, Debug)]
pub struct Transformer {
    pub cfg: TransformerConfig,
    pub pos: ParamId,
    pub blocks: Vec<Block>,
    pub final_ln: LayerNorm,
}

#[derive(Clone, Debug)]
pub struct TransformerCache {
    len: usize,
    blocks: Vec<BlockCache>,
    final_ln: LayerNormCache,
}

/// Per-stream incremental decoding state.
#[derive(Clone, Debug, Default)]
pub struct TransformerState {
    kv: Vec<KvCache>,
    len: usize,
}

impl TransformerState {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl Transformer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        cfg: TransformerConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let pos = store.register_uniform(format!("{name}.pos"), &[cfg.max_len, cfg.dim], cfg.dim, rng)?;
        let mut blocks = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let prefix = format!("{name}.blocks.{l}");
            blocks.push(Block {
                ln1: LayerNorm::new(store, &format!("{prefix}.ln1"), cfg.dim)?,
                attn: CausalAttention::new(store, &format!("{prefix}.attn"), cfg.dim, cfg.heads, rng)?,
                ln2: LayerNorm::new(store, &format!("{prefix}.ln2"), cfg.dim)?,
                ffn: FeedForward::new(store, &format!("{prefix}.ffn"), cfg.dim, cfg.ffn_hidden, rng)?,
            });
        }
        let final_ln = LayerNorm::new(store, &format!("{name}.final_ln"), cfg.dim)?;
        Ok(Self {
            cfg,
            pos,
            blocks,
            final_ln,
        })
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len > self.cfg.max_len {
            return Err(Error::LengthOverflow {
                len,
                max: self.cfg.max_len,
            });
        }
        Ok(())
    }

    /// Final-layer (post-norm) states for a `[T, dim]` input embedding.
    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<(Tensor, TransformerCache)> {
        x.expect_width("transformer input", self.cfg.dim)?;
        let n = x.rows();
        self.check_len(n)?;
        let pos = store.value(self.pos);
        let mut h = x.clone();
        for t in 0..n {
            for (v, p) in h.row_mut(t).iter_mut().zip(pos.row(t)) {
                *v += p;
            }
        }
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (a, ln1) = block.ln1.forward(store, &h)?;
            let (y1, attn) = block.attn.forward(store, &a)?;
            h.add_assign(&y1)?;
            let (b, ln2) = block.ln2.forward(store, &h)?;
            let (y2, ffn) = block.ffn.forward(store, &b)?;
            h.add_assign(&y2)?;
            caches.push(BlockCache { ln1, attn, ln2, ffn });
        }
        let (out, final_ln) = self.final_ln.forward(store, &h)?;
        Ok((
            out,
            TransformerCache {
                len: n,
                blocks: caches,
                final_ln,
            },
        ))
    }

    /// Returns the gradient with respect to the input embeddings.
    pub fn backward(&self, store: &mut ParamStore, cache: &TransformerCache, dy: &Tensor) -> Result<Tensor> {
        let mut dh = self.final_ln.backward(store, &cache.final_ln, dy)?;
        for (block, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            let db = block.ffn.backward(store, &bc.ffn, &dh)?;
            dh.add_assign(&block.ln2.backward(store, &bc.ln2, &db)?)?;
            let da = block.attn.backward(store, &bc.attn, &dh)?;
            dh.add_assign(&block.ln1.backward(store, &bc.ln1, &da)?)?;
        }
        let gpos = &mut store.get_mut(self.pos).grad;
        for t in 0..cache.len {
            for (g, d) in gpos.row_mut(t).iter_mut().zip(dh.row(t)) {
                *g += d;
            }
        }
        Ok(dh)
    }

    pub fn start(&self) -> TransformerState {
        TransformerState {
            kv: vec![KvCache::default(); self.blocks.len()],
            len: 0,
        }
    }

    /// Feeds one more position; returns its final-layer state. Matches row
    /// `state.len()` of [`Transformer::forward`] bit for bit.
    pub fn step(&self, store: &ParamStore, state: &mut TransformerState, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.cfg.dim;
        if x.len() != d {
            return Err(crate::error::shape_mismatch("transformer step", &[d], &[x.len()]));
        }
        let t = state.len;
        self.check_len(t + 1)?;
        let mut h: Vec<f64> = x.iter().zip(store.value(self.pos).row(t)).map(|(v, p)| v + p).collect();
        let mut xhat = vec![0.0; d];
        let mut a = vec![0.0; d];
        let mut y = vec![0.0; d];
        for (block, kv) in self.blocks.iter().zip(state.kv.iter_mut()) {
            block.ln1.forward_row(store, &h, &mut xhat, &mut a);
            block.attn.step(store, kv, &a, &mut y);
            for (hv, yv) in h.iter_mut().zip(&y) {
                *hv += yv;
            }
            block.ln2.forward_row(store, &h, &mut xhat, &mut a);
            let mut scratch = vec![0.0; self.cfg.ffn_hidden];
            block.ffn.forward_row(store, &a, &mut scratch, &mut y);
            for (hv, yv) in h.iter_mut().zip(&y) {
                *hv += yv;
            }
        }
        let mut out = vec![0.0; d];
        self.final_ln.forward_row(store, &h, &mut xhat, &mut out);
        state.len += 1;
        Ok(out)
    }
}
