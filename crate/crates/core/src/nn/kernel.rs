//! Uniform forward/backward interface over every layer kind, used by the
//! per-kernel gradient suites and anywhere a layer is driven generically.

use rand::Rng;

use super::attention::{AttentionCache, CausalAttention};
use super::conv1d::Conv1d;
use super::embedding::Embedding;
use super::ffn::{FeedForward, FeedForwardCache};
use super::layernorm::{LayerNorm, LayerNormCache};
use super::linear::Linear;
use super::loss::{softmax_cross_entropy, CrossEntropy};
use super::param::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelSpec {
    Linear {
        d_in: usize,
        d_out: usize,
    },
    Conv1d {
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Embedding {
        vocab: usize,
        dim: usize,
    },
    LayerNorm {
        dim: usize,
    },
    CausalAttention {
        dim: usize,
        heads: usize,
    },
    Ffn {
        dim: usize,
        hidden: usize,
    },
    SoftmaxCe {
        classes: usize,
    },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        let dims: Vec<usize> = match *self {
            KernelSpec::Linear { d_in, d_out } => vec![d_in, d_out],
            KernelSpec::Conv1d {
                c_in,
                c_out,
                kernel,
                stride,
                ..
            } => vec![c_in, c_out, kernel, stride],
            KernelSpec::Embedding { vocab, dim } => vec![vocab, dim],
            KernelSpec::LayerNorm { dim } => vec![dim],
            KernelSpec::CausalAttention { dim, heads } => {
                if heads > 0 && dim % heads != 0 {
                    return Err(Error::Config(format!("width {dim} not divisible by {heads} heads")));
                }
                vec![dim, heads]
            }
            KernelSpec::Ffn { dim, hidden } => vec![dim, hidden],
            KernelSpec::SoftmaxCe { classes } => vec![classes],
        };
        if dims.contains(&0) {
            return Err(Error::Config(format!("{self:?}: dimensions must be positive")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Layer {
    Linear(Linear),
    Conv1d(Conv1d),
    Embedding(Embedding),
    LayerNorm(LayerNorm),
    Attention(CausalAttention),
    Ffn(FeedForward),
    SoftmaxCe { classes: usize },
}

#[derive(Clone, Debug)]
enum Cache {
    Input(Tensor),
    Ids(Vec<usize>),
    LayerNorm(LayerNormCache),
    Attention(AttentionCache),
    Ffn(FeedForwardCache),
    Ce(CrossEntropy),
}

/// A layer plus the intermediates of its most recent forward pass.
#[derive(Clone, Debug)]
pub struct Kernel {
    spec: KernelSpec,
    layer: Layer,
    cache: Option<Cache>,
    targets: Vec<Option<usize>>,
}

impl Kernel {
    /// Registers the kernel's parameters under `name`.
    pub fn build<R: Rng + ?Sized>(spec: KernelSpec, store: &mut ParamStore, name: &str, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layer = match spec {
            KernelSpec::Linear { d_in, d_out } => Layer::Linear(Linear::new(store, name, d_in, d_out, true, rng)?),
            KernelSpec::Conv1d {
                c_in,
                c_out,
                kernel,
                stride,
                pad,
            } => Layer::Conv1d(Conv1d::new(store, name, c_in, c_out, kernel, stride, pad, rng)?),
            KernelSpec::Embedding { vocab, dim } => Layer::Embedding(Embedding::new(store, name, vocab, dim, rng)?),
            KernelSpec::LayerNorm { dim } => Layer::LayerNorm(LayerNorm::new(store, name, dim)?),
            KernelSpec::CausalAttention { dim, heads } => {
                Layer::Attention(CausalAttention::new(store, name, dim, heads, rng)?)
            }
            KernelSpec::Ffn { dim, hidden } => Layer::Ffn(FeedForward::new(store, name, dim, hidden, rng)?),
            KernelSpec::SoftmaxCe { classes } => Layer::SoftmaxCe { classes },
        };
        Ok(Self {
            spec,
            layer,
            cache: None,
            targets: Vec::new(),
        })
    }

    pub fn spec(&self) -> KernelSpec {
        self.spec
    }

    /// Targets for a `SoftmaxCe` kernel, one per logit row.
    pub fn with_targets(mut self, targets: Vec<Option<usize>>) -> Self {
        self.targets = targets;
        self
    }

    /// Runs the layer. Embedding inputs are ids encoded as a rank-1 tensor;
    /// `SoftmaxCe` returns its mean loss as a one-element tensor.
    pub fn forward(&mut self, store: &ParamStore, input: &Tensor) -> Result<Tensor> {
        let (out, cache) = match &self.layer {
            Layer::Linear(l) => (l.forward(store, input)?, Cache::Input(input.clone())),
            Layer::Conv1d(c) => (c.forward(store, input)?, Cache::Input(input.clone())),
            Layer::Embedding(e) => {
                let ids = input
                    .data()
                    .iter()
                    .map(|v| {
                        if v.fract() != 0.0 || *v < 0.0 {
                            Err(Error::Config(format!("embedding id {v} is not a non-negative integer")))
                        } else {
                            Ok(*v as usize)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                (e.forward(store, &ids)?, Cache::Ids(ids))
            }
            Layer::LayerNorm(l) => {
                let (y, c) = l.forward(store, input)?;
                (y, Cache::LayerNorm(c))
            }
            Layer::Attention(a) => {
                let (y, c) = a.forward(store, input)?;
                (y, Cache::Attention(c))
            }
            Layer::Ffn(f) => {
                let (y, c) = f.forward(store, input)?;
                (y, Cache::Ffn(c))
            }
            Layer::SoftmaxCe { classes } => {
                input.expect_width("softmax-ce logits", *classes)?;
                let ce = softmax_cross_entropy(input, &self.targets)?;
                (Tensor::scalar(ce.loss), Cache::Ce(ce))
            }
        };
        self.cache = Some(cache);
        Ok(out)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, store: &mut ParamStore, upstream: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::MissingCache(format!("{:?}", self.spec)))?;
        match (&self.layer, cache) {
            (Layer::Linear(l), Cache::Input(x)) => l.backward(store, x, upstream),
            (Layer::Conv1d(c), Cache::Input(x)) => c.backward(store, x, upstream),
            (Layer::Embedding(e), Cache::Ids(ids)) => {
                let opt: Vec<Option<usize>> = ids.iter().copied().map(Some).collect();
                e.backward(store, &opt, upstream)?;
                Ok(Tensor::zeros(&[ids.len()]))
            }
            (Layer::LayerNorm(l), Cache::LayerNorm(c)) => l.backward(store, c, upstream),
            (Layer::Attention(a), Cache::Attention(c)) => a.backward(store, c, upstream),
            (Layer::Ffn(f), Cache::Ffn(c)) => f.backward(store, c, upstream),
            (Layer::SoftmaxCe { .. }, Cache::Ce(ce)) => {
                upstream.expect_shape("softmax-ce upstream", &[1])?;
                Ok(ce.backward(upstream.data()[0]))
            }
            _ => unreachable!("cache kind always matches its layer"),
        }
    }
}
