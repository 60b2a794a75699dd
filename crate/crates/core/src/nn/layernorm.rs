use super::ops::layernorm_row;
use super::param::{ParamId, ParamStore};
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub struct LayerNormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        let gamma = store.register(format!("{name}.gamma"), Tensor::filled(&[dim], 1.0))?;
        let beta = store.register(format!("{name}.beta"), Tensor::zeros(&[dim]))?;
        Ok(Self { gamma, beta, dim })
    }

    pub fn forward_row(&self, store: &ParamStore, x: &[f64], xhat: &mut [f64], out: &mut [f64]) -> f64 {
        layernorm_row(
            x,
            store.value(self.gamma).data(),
            store.value(self.beta).data(),
            xhat,
            out,
        )
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<(Tensor, LayerNormCache)> {
        x.expect_width("layernorm input", self.dim)?;
        let mut out = Tensor::zeros(&[x.rows(), self.dim]);
        let mut xhat = Tensor::zeros(&[x.rows(), self.dim]);
        let mut inv_std = Vec::with_capacity(x.rows());
        for t in 0..x.rows() {
            inv_std.push(self.forward_row(store, x.row(t), xhat.row_mut(t), out.row_mut(t)));
        }
        Ok((out, LayerNormCache { xhat, inv_std }))
    }

    pub fn backward(&self, store: &mut ParamStore, cache: &LayerNormCache, dy: &Tensor) -> Result<Tensor> {
        dy.expect_shape("layernorm upstream", cache.xhat.shape())?;
        let n = self.dim as f64;
        let gamma = store.value(self.gamma).data().to_vec();
        let mut dx = Tensor::zeros(dy.shape());
        let mut dgamma = vec![0.0; self.dim];
        let mut dbeta = vec![0.0; self.dim];
        let mut dxhat = vec![0.0; self.dim];
        for t in 0..dy.rows() {
            let dyr = dy.row(t);
            let xh = cache.xhat.row(t);
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for i in 0..self.dim {
                dgamma[i] += dyr[i] * xh[i];
                dbeta[i] += dyr[i];
                dxhat[i] = dyr[i] * gamma[i];
                sum_dxhat += dxhat[i];
                sum_dxhat_xhat += dxhat[i] * xh[i];
            }
            let inv = cache.inv_std[t];
            for (i, d) in dx.row_mut(t).iter_mut().enumerate() {
                *d = inv / n * (n * dxhat[i] - sum_dxhat - xh[i] * sum_dxhat_xhat);
            }
        }
        for (g, d) in store.get_mut(self.gamma).grad.data_mut().iter_mut().zip(&dgamma) {
            *g += d;
        }
        for (g, d) in store.get_mut(self.beta).grad.data_mut().iter_mut().zip(&dbeta) {
            *g += d;
        }
        Ok(dx)
    }
}
