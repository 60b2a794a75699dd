//! Finite-difference suite over every kernel kind and every composite model,
//! at sizes small enough for the oracle. Each entry reports the worst
//! relative error over parameter and input gradients.

use crate::decoder::{DecoderConfig, SpeechDecoder};
use crate::error::Result;
use crate::frontend::{Adapter, AdapterConfig, FeatureFrames};
use crate::lm::{LmConfig, MicroLm, MixedSequence, BOS, EOS, SEP};
use crate::nn::gradcheck::{grad_check, relative_error};
use crate::nn::loss::softmax_cross_entropy;
use crate::nn::transformer::{Transformer, TransformerConfig};
use crate::nn::{Kernel, KernelSpec, ParamStore};
use crate::rng::derive_rng;
use crate::stream::{downsampled_length, RateConfig, ScheduleConfig};
use crate::tensor::Tensor;
use crate::tokenizer::SpeechTokenSequence;

pub const SUITE_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteEntry {
    pub name: String,
    /// Scalars compared: parameters plus differentiable inputs.
    pub checked: usize,
    pub max_rel_error: f64,
}

/// Central differences of `loss` at every element of `x` against `analytic`.
fn input_check(x: &Tensor, analytic: &Tensor, eps: f64, mut loss: impl FnMut(&Tensor) -> Result<f64>) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (loss(&plus)? - loss(&minus)?) / (2.0 * eps);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

pub const SUITE_KERNELS: [KernelSpec; 7] = [
    KernelSpec::Linear { d_in: 3, d_out: 4 },
    KernelSpec::Conv1d {
        c_in: 3,
        c_out: 2,
        kernel: 3,
        stride: 2,
        pad: 1,
    },
    KernelSpec::Embedding { vocab: 5, dim: 3 },
    KernelSpec::LayerNorm { dim: 4 },
    KernelSpec::CausalAttention { dim: 4, heads: 2 },
    KernelSpec::Ffn { dim: 3, hidden: 6 },
    KernelSpec::SoftmaxCe { classes: 5 },
];

fn kernel_name(spec: KernelSpec) -> &'static str {
    match spec {
        KernelSpec::Linear { .. } => "kernel.linear",
        KernelSpec::Conv1d { .. } => "kernel.conv1d",
        KernelSpec::Embedding { .. } => "kernel.embedding",
        KernelSpec::LayerNorm { .. } => "kernel.layernorm",
        KernelSpec::CausalAttention { .. } => "kernel.attention",
        KernelSpec::Ffn { .. } => "kernel.ffn",
        KernelSpec::SoftmaxCe { .. } => "kernel.softmax_ce",
    }
}

/// Loss = <r, kernel(x)>; cross-entropy already yields a scalar.
pub fn check_kernel(spec: KernelSpec, seed: u64, eps: f64) -> Result<SuiteEntry> {
    use rand::Rng;
    let mut rng = derive_rng(seed, "gradsuite.kernel");
    let mut store = ParamStore::new();
    let t = 4;
    let (x, targets) = match spec {
        KernelSpec::Linear { d_in, .. } => (Tensor::uniform(&[t, d_in], 1.0, &mut rng), vec![]),
        KernelSpec::Conv1d { c_in, .. } => (Tensor::uniform(&[t + 2, c_in], 1.0, &mut rng), vec![]),
        KernelSpec::Embedding { vocab, .. } => {
            let ids = (0..t).map(|_| rng.gen_range(0..vocab) as f64).collect();
            (Tensor::from_vec(&[t], ids)?, vec![])
        }
        KernelSpec::LayerNorm { dim } | KernelSpec::CausalAttention { dim, .. } | KernelSpec::Ffn { dim, .. } => {
            (Tensor::uniform(&[t, dim], 1.0, &mut rng), vec![])
        }
        KernelSpec::SoftmaxCe { classes } => {
            let targets = (0..t).map(|i| (i != 1).then(|| rng.gen_range(0..classes))).collect();
            (Tensor::uniform(&[t, classes], 2.0, &mut rng), targets)
        }
    };
    let mut kernel = Kernel::build(spec, &mut store, "k", &mut rng)?.with_targets(targets);
    let y = kernel.forward(&store, &x)?;
    let r = Tensor::uniform(y.shape(), 1.0, &mut rng);
    let params = grad_check(
        &mut store,
        |s, with_grad| {
            let y = kernel.forward(s, &x)?;
            if with_grad {
                kernel.backward(s, &r)?;
            }
            Ok(y.dot(&r))
        },
        eps,
    )?;
    let mut worst = params.max_rel_error;
    let mut checked = params.checked;
    if !matches!(spec, KernelSpec::Embedding { .. }) {
        kernel.forward(&store, &x)?;
        let dx = kernel.backward(&mut store, &r)?;
        worst = worst.max(input_check(&x, &dx, eps, |v| Ok(kernel.forward(&store, v)?.dot(&r)))?);
        checked += x.len();
    }
    Ok(SuiteEntry {
        name: kernel_name(spec).into(),
        checked,
        max_rel_error: worst,
    })
}

pub fn check_transformer(seed: u64, eps: f64) -> Result<SuiteEntry> {
    let mut rng = derive_rng(seed, "gradsuite.transformer");
    let mut store = ParamStore::new();
    let cfg = TransformerConfig {
        dim: 8,
        layers: 2,
        heads: 2,
        ffn_hidden: 16,
        max_len: 12,
    };
    let tf = Transformer::new(&mut store, "tf", cfg, &mut rng)?;
    let x = Tensor::uniform(&[6, 8], 1.0, &mut rng);
    let r = Tensor::uniform(&[6, 8], 1.0, &mut rng);
    let report = grad_check(
        &mut store,
        |s, with_grad| {
            let (y, cache) = tf.forward(s, &x)?;
            if with_grad {
                tf.backward(s, &cache, &r)?;
            }
            Ok(y.dot(&r))
        },
        eps,
    )?;
    let (_, cache) = tf.forward(&store, &x)?;
    let dx = tf.backward(&mut store, &cache, &r)?;
    let input = input_check(&x, &dx, eps, |v| Ok(tf.forward(&store, v)?.0.dot(&r)))?;
    Ok(SuiteEntry {
        name: "transformer".into(),
        checked: report.checked + x.len(),
        max_rel_error: report.max_rel_error.max(input),
    })
}

pub fn check_adapter(seed: u64, eps: f64) -> Result<SuiteEntry> {
    let mut rng = derive_rng(seed, "gradsuite.adapter");
    let mut store = ParamStore::new();
    let cfg = AdapterConfig {
        d_enc: 3,
        d_llm: 4,
        ffn_mult: 2,
    };
    let a = Adapter::new(&mut store, cfg, &RateConfig::default(), &mut rng)?;
    let frames = |data: Tensor| FeatureFrames { rate: 25.0, data };
    let x = Tensor::uniform(&[9, 3], 1.0, &mut rng);
    let r = Tensor::uniform(&[downsampled_length(9), 4], 1.0, &mut rng);
    let input = frames(x.clone());
    let report = grad_check(
        &mut store,
        |s, with_grad| {
            let (out, cache) = a.forward(s, &input)?;
            if with_grad {
                a.backward(s, &cache, &r)?;
            }
            Ok(out.data.dot(&r))
        },
        eps,
    )?;
    let (_, cache) = a.forward(&store, &input)?;
    let dx = a.backward(&mut store, &cache, &r)?;
    let input_err = input_check(&x, &dx, eps, |v| {
        Ok(a.forward(&store, &frames(v.clone()))?.0.data.dot(&r))
    })?;
    Ok(SuiteEntry {
        name: "adapter".into(),
        checked: report.checked + x.len(),
        max_rel_error: report.max_rel_error.max(input_err),
    })
}

/// Text cross-entropy plus a linear probe on the hidden states, over a
/// sequence mixing token and embedding positions.
pub fn check_micro_lm(seed: u64, eps: f64) -> Result<SuiteEntry> {
    let mut rng = derive_rng(seed, "gradsuite.lm");
    let mut store = ParamStore::new();
    let cfg = LmConfig {
        vocab: 20,
        d_llm: 8,
        layers: 2,
        heads: 2,
        max_len: 12,
        ffn_hidden: 12,
    };
    let lm = MicroLm::new(&mut store, cfg, &mut rng)?;
    let ext = Tensor::uniform(&[1, 8], 1.0, &mut rng);
    let build = |e: &Tensor| {
        let mut seq = MixedSequence::from_tokens(&[BOS, 17]);
        seq.push_embeddings(e).push_tokens(&[SEP, 18, 19]);
        seq
    };
    let targets = vec![None, None, None, Some(18), Some(19), Some(EOS)];
    let dh = Tensor::uniform(&[6, 8], 0.1, &mut rng);
    let loss = |s: &ParamStore, seq: &MixedSequence| -> Result<f64> {
        let (out, _) = lm.forward(s, seq)?;
        Ok(softmax_cross_entropy(&out.logits, &targets)?.loss + out.hidden.dot(&dh))
    };
    let seq = build(&ext);
    let report = grad_check(
        &mut store,
        |s, with_grad| {
            let (out, cache) = lm.forward(s, &seq)?;
            let ce = softmax_cross_entropy(&out.logits, &targets)?;
            if with_grad {
                lm.backward(s, &cache, Some(&ce.backward(1.0)), Some(&dh))?;
            }
            Ok(ce.loss + out.hidden.dot(&dh))
        },
        eps,
    )?;
    let (out, cache) = lm.forward(&store, &seq)?;
    let ce = softmax_cross_entropy(&out.logits, &targets)?;
    let dx = lm.backward(&mut store, &cache, Some(&ce.backward(1.0)), Some(&dh))?;
    let input_err = input_check(&ext, &dx.slice_rows(2, 3), eps, |v| loss(&store, &build(v)))?;
    Ok(SuiteEntry {
        name: "micro_lm".into(),
        checked: report.checked + ext.len(),
        max_rel_error: report.max_rel_error.max(input_err),
    })
}

/// Hidden-state projection plus speech decoder on an interleaved sequence.
pub fn check_projection_decoder(seed: u64, eps: f64) -> Result<SuiteEntry> {
    let mut rng = derive_rng(seed, "gradsuite.decoder");
    let mut store = ParamStore::new();
    let cfg = DecoderConfig {
        d_llm: 4,
        d_dec: 4,
        layers: 1,
        heads: 2,
        ffn_hidden: 6,
        max_len: 32,
        text_vocab: 3,
        codebook: 5,
    };
    let dec = SpeechDecoder::new(&mut store, cfg, ScheduleConfig::new(2, 3, 2)?, &mut rng)?;
    let hidden = Tensor::uniform(&[5, 4], 1.0, &mut rng);
    let seq = dec.build_training_sequence(&hidden, &SpeechTokenSequence::new(vec![1, 4, 0, 2, 2, 3]))?;
    let report = grad_check(
        &mut store,
        |s, with_grad| {
            let cache = dec.forward(s, &seq)?;
            if with_grad {
                dec.backward(s, &cache, 1.0)?;
            }
            Ok(cache.ce.loss)
        },
        eps,
    )?;
    let cache = dec.forward(&store, &seq)?;
    let dh = dec.backward(&mut store, &cache, 1.0)?;
    let input_err = input_check(&seq.hidden, &dh, eps, |v| {
        let mut s = seq.clone();
        s.hidden = v.clone();
        dec.loss(&store, &s)
    })?;
    Ok(SuiteEntry {
        name: "projection_decoder".into(),
        checked: report.checked + hidden.len(),
        max_rel_error: report.max_rel_error.max(input_err),
    })
}

/// Every kernel kind, the transformer stack and the three composite models.
pub fn run_suite(seed: u64, eps: f64) -> Result<Vec<SuiteEntry>> {
    let mut out = Vec::new();
    for (i, spec) in SUITE_KERNELS.into_iter().enumerate() {
        out.push(check_kernel(spec, seed.wrapping_add(i as u64), eps)?);
    }
    out.push(check_transformer(seed, eps)?);
    out.push(check_adapter(seed, eps)?);
    out.push(check_micro_lm(seed, eps)?);
    out.push(check_projection_decoder(seed, eps)?);
    Ok(out)
}
