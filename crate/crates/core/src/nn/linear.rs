use rand::Rng;

use super::ops::linear_row;
use super::param::{ParamId, ParamStore};
use crate::error::Result;
use crate::tensor::Tensor;

/// `y = x·W + b` with `W` stored `[d_in, d_out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.register_uniform(format!("{name}.weight"), &[d_in, d_out], d_in, rng)?;
        let bias = if bias {
            Some(store.register(format!("{name}.bias"), Tensor::zeros(&[d_out]))?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            d_in,
            d_out,
        })
    }

    pub fn forward_row(&self, store: &ParamStore, x: &[f64], out: &mut [f64]) {
        let w = store.value(self.weight).data();
        let b = self.bias.map(|id| store.value(id).data());
        linear_row(x, w, b, out);
    }

    /// Forward over a `[T, d_in]` input. The input itself is the cache.
    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        x.expect_width("linear input", self.d_in)?;
        let mut out = Tensor::zeros(&[x.rows(), self.d_out]);
        for t in 0..x.rows() {
            self.forward_row(store, x.row(t), out.row_mut(t));
        }
        Ok(out)
    }

    pub fn backward(&self, store: &mut ParamStore, x: &Tensor, dy: &Tensor) -> Result<Tensor> {
        x.expect_width("linear cached input", self.d_in)?;
        dy.expect_shape("linear upstream", &[x.rows(), self.d_out])?;
        let (d_in, d_out) = (self.d_in, self.d_out);
        let mut dx = Tensor::zeros(&[x.rows(), d_in]);
        {
            let p = store.get_mut(self.weight);
            let accumulate = p.trainable;
            let w = p.value.data();
            let gw = p.grad.data_mut();
            for t in 0..x.rows() {
                let xr = x.row(t);
                let dyr = dy.row(t);
                let dxr = dx.row_mut(t);
                for k in 0..d_in {
                    let wrow = &w[k * d_out..(k + 1) * d_out];
                    if accumulate {
                        let xk = xr[k];
                        for (g, d) in gw[k * d_out..(k + 1) * d_out].iter_mut().zip(dyr) {
                            *g += xk * d;
                        }
                    }
                    dxr[k] = super::ops::dot(wrow, dyr);
                }
            }
        }
        if let Some(b) = self.bias {
            let gb = store.get_mut(b).grad.data_mut();
            for t in 0..dy.rows() {
                for (g, d) in gb.iter_mut().zip(dy.row(t)) {
                    *g += d;
                }
            }
        }
        Ok(dx)
    }
}
