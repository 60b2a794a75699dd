use rand::Rng;

use super::param::{ParamId, ParamStore};
use crate::error::Result;
use crate::stream::conv_out_len;
use crate::tensor::Tensor;

/// Temporal convolution over a time-major `[T, c_in]` input. The weight is
/// stored `[kernel, c_in, c_out]`.
#[derive(Clone, Debug)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.register_uniform(format!("{name}.weight"), &[kernel, c_in, c_out], kernel * c_in, rng)?;
        let bias = store.register(format!("{name}.bias"), Tensor::zeros(&[c_out]))?;
        Ok(Self {
            weight,
            bias,
            c_in,
            c_out,
            kernel,
            stride,
            pad,
        })
    }

    pub fn out_len(&self, n: usize) -> usize {
        conv_out_len(n, self.kernel, self.stride, self.pad)
    }

    /// Input index read by output `t` at kernel tap `j`, if inside the input.
    fn tap(&self, t: usize, j: usize, n: usize) -> Option<usize> {
        (t * self.stride + j).checked_sub(self.pad).filter(|&i| i < n)
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        x.expect_width("conv1d input", self.c_in)?;
        let n = x.rows();
        let t_out = self.out_len(n);
        let w = store.value(self.weight).data();
        let b = store.value(self.bias).data();
        let mut y = Tensor::zeros(&[t_out, self.c_out]);
        for t in 0..t_out {
            let yr = y.row_mut(t);
            yr.copy_from_slice(b);
            for j in 0..self.kernel {
                let Some(i) = self.tap(t, j, n) else { continue };
                let xr = x.row(i);
                for c in 0..self.c_in {
                    let xv = xr[c];
                    let base = (j * self.c_in + c) * self.c_out;
                    for (o, yo) in yr.iter_mut().enumerate() {
                        *yo += xv * w[base + o];
                    }
                }
            }
        }
        Ok(y)
    }

    pub fn backward(&self, store: &mut ParamStore, x: &Tensor, dy: &Tensor) -> Result<Tensor> {
        x.expect_width("conv1d cached input", self.c_in)?;
        let n = x.rows();
        let t_out = self.out_len(n);
        dy.expect_shape("conv1d upstream", &[t_out, self.c_out])?;
        let mut dx = Tensor::zeros(&[n, self.c_in]);
        {
            let p = store.get_mut(self.weight);
            let w = p.value.data();
            let gw = p.grad.data_mut();
            for t in 0..t_out {
                let dyr = dy.row(t);
                for j in 0..self.kernel {
                    let Some(i) = self.tap(t, j, n) else { continue };
                    let xr = x.row(i);
                    let dxr = dx.row_mut(i);
                    for c in 0..self.c_in {
                        let base = (j * self.c_in + c) * self.c_out;
                        let mut acc = 0.0;
                        for o in 0..self.c_out {
                            gw[base + o] += xr[c] * dyr[o];
                            acc += w[base + o] * dyr[o];
                        }
                        dxr[c] += acc;
                    }
                }
            }
        }
        let gb = store.get_mut(self.bias).grad.data_mut();
        for t in 0..t_out {
            for (g, d) in gb.iter_mut().zip(dy.row(t)) {
                *g += d;
            }
        }
        Ok(dx)
    }
}
