use rand::Rng;

use super::linear::Linear;
use super::ops::{silu, silu_grad};
use super::param::ParamStore;
use crate::error::Result;
use crate::tensor::Tensor;

/// Position-wise `Linear -> SiLU -> Linear`.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

#[derive(Clone, Debug)]
pub struct FeedForwardCache {
    x: Tensor,
    pre: Tensor,
    act: Tensor,
}

impl FeedForward {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            up: Linear::new(store, &format!("{name}.up"), dim, hidden, true, rng)?,
            down: Linear::new(store, &format!("{name}.down"), hidden, dim, true, rng)?,
        })
    }

    pub fn forward_row(&self, store: &ParamStore, x: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        self.up.forward_row(store, x, scratch);
        for v in scratch.iter_mut() {
            *v = silu(*v);
        }
        self.down.forward_row(store, scratch, out);
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<(Tensor, FeedForwardCache)> {
        let pre = self.up.forward(store, x)?;
        let mut act = pre.clone();
        for v in act.data_mut() {
            *v = silu(*v);
        }
        let out = self.down.forward(store, &act)?;
        Ok((out, FeedForwardCache { x: x.clone(), pre, act }))
    }

    pub fn backward(&self, store: &mut ParamStore, cache: &FeedForwardCache, dy: &Tensor) -> Result<Tensor> {
        let mut dact = self.down.backward(store, &cache.act, dy)?;
        for (d, p) in dact.data_mut().iter_mut().zip(cache.pre.data()) {
            *d *= silu_grad(*p);
        }
        self.up.backward(store, &cache.x, &dact)
    }
}
