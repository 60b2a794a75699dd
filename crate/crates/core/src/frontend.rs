//! Waveform → 25 Hz feature frames → 6.25 Hz adapter embeddings.
//!
//! The encoder is a fixed log-energy filterbank followed by a fixed random
//! projection; it has no trainable weights. The adapter is two stride-2
//! convolutions and a position-wise feed-forward network.

use rand::Rng;

use serde::{Deserialize, Serialize};

use crate::audio::{BandAnalyzer, MEL_BANDS_HZ};
use crate::error::{Error, Result};
use crate::nn::conv1d::Conv1d;
use crate::nn::ffn::{FeedForward, FeedForwardCache};
use crate::nn::ops::{silu, silu_grad};
use crate::nn::ParamStore;
use crate::rng::derive_rng;
use crate::stream::RateConfig;
use crate::tensor::Tensor;

/// Analysis bands of the encoder stub.
pub const ENCODER_BANDS: usize = 40;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFrames {
    pub rate: f64,
    /// `[n_frames, dim]`.
    pub data: Tensor,
}

impl FeatureFrames {
    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdapterEmbeddings {
    pub rate: f64,
    /// `[downsampled_length(n_frames), d_llm]`.
    pub data: Tensor,
}

/// The 20 synthesis band centres, their 19 midpoints and 100 Hz. Every
/// frequency is a multiple of 25 Hz, i.e. a whole number of cycles per 40 ms
/// frame.
pub fn encoder_band_freqs() -> Vec<f64> {
    let mut freqs = vec![100.0];
    freqs.extend_from_slice(&MEL_BANDS_HZ);
    freqs.extend(MEL_BANDS_HZ.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    freqs.sort_by(f64::total_cmp);
    freqs
}

#[derive(Clone, Debug)]
pub struct EncoderStub {
    rates: RateConfig,
    analyzer: BandAnalyzer,
    /// `[ENCODER_BANDS, dim]`, fixed at construction.
    projection: Tensor,
}

impl EncoderStub {
    pub fn new(rates: RateConfig, dim: usize, root_seed: u64) -> Result<Self> {
        rates.validate()?;
        let mut rng = derive_rng(root_seed, "encoder_stub.projection");
        let bound = 1.0 / (ENCODER_BANDS as f64).sqrt();
        let projection = Tensor::uniform(&[ENCODER_BANDS, dim], bound, &mut rng);
        Ok(Self {
            analyzer: BandAnalyzer::new(&encoder_band_freqs(), rates.encoder_hop(), rates.sample_rate),
            rates,
            projection,
        })
    }

    pub fn dim(&self) -> usize {
        self.projection.cols()
    }

    pub fn projection(&self) -> &Tensor {
        &self.projection
    }

    /// Frame `t` summarizes samples `[t*hop, (t+1)*hop)`; a trailing partial
    /// frame is dropped.
    pub fn encode_features(&self, waveform: &[f64], sample_rate: u32) -> Result<FeatureFrames> {
        self.encode_with(&self.projection, waveform, sample_rate)
    }

    /// As [`EncoderStub::encode_features`] with an explicit `[ENCODER_BANDS, dim]`
    /// projection, e.g. the copy held in a parameter store.
    pub fn encode_with(&self, projection: &Tensor, waveform: &[f64], sample_rate: u32) -> Result<FeatureFrames> {
        projection.expect_shape("encoder projection", &[ENCODER_BANDS, self.dim()])?;
        if sample_rate != self.rates.sample_rate {
            return Err(Error::SampleRate {
                expected: self.rates.sample_rate,
                actual: sample_rate,
            });
        }
        if waveform.iter().any(|s| !s.is_finite()) {
            return Err(Error::Wav("waveform contains non-finite samples".into()));
        }
        let mags = self.analyzer.magnitudes(waveform);
        let dim = self.dim();
        let mut data = Tensor::zeros(&[mags.rows(), dim]);
        let mut energies = vec![0.0; ENCODER_BANDS];
        for t in 0..mags.rows() {
            for (e, m) in energies.iter_mut().zip(mags.row(t)) {
                *e = (m * m / 1e-4).ln_1p();
            }
            crate::nn::ops::linear_row(&energies, projection.data(), None, data.row_mut(t));
        }
        Ok(FeatureFrames {
            rate: self.rates.encoder_hz,
            data,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdapterConfig {
    pub d_enc: usize,
    pub d_llm: usize,
    /// FFN hidden width as a multiple of `d_llm`.
    pub ffn_mult: usize,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            d_enc: 32,
            d_llm: 64,
            ffn_mult: 4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adapter {
    pub cfg: AdapterConfig,
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub ffn: FeedForward,
    rate: f64,
}

#[derive(Clone, Debug)]
pub struct AdapterCache {
    x: Tensor,
    c1: Tensor,
    a1: Tensor,
    ffn: FeedForwardCache,
}

impl Adapter {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        cfg: AdapterConfig,
        rates: &RateConfig,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            conv1: Conv1d::new(store, "adapter.conv1", cfg.d_enc, cfg.d_llm, 3, 2, 1, rng)?,
            conv2: Conv1d::new(store, "adapter.conv2", cfg.d_llm, cfg.d_llm, 3, 2, 1, rng)?,
            ffn: FeedForward::new(store, "adapter.ffn", cfg.d_llm, cfg.ffn_mult * cfg.d_llm, rng)?,
            cfg,
            rate: rates.adapter_hz,
        })
    }

    /// `conv1 → SiLU → conv2 → FFN`.
    pub fn forward(&self, store: &ParamStore, frames: &FeatureFrames) -> Result<(AdapterEmbeddings, AdapterCache)> {
        frames.data.expect_width("adapter input", self.cfg.d_enc)?;
        let c1 = self.conv1.forward(store, &frames.data)?;
        let mut a1 = c1.clone();
        a1.data_mut().iter_mut().for_each(|v| *v = silu(*v));
        let c2 = self.conv2.forward(store, &a1)?;
        let (out, ffn) = self.ffn.forward(store, &c2)?;
        Ok((
            AdapterEmbeddings {
                rate: self.rate,
                data: out,
            },
            AdapterCache {
                x: frames.data.clone(),
                c1,
                a1,
                ffn,
            },
        ))
    }

    pub fn embed(&self, store: &ParamStore, frames: &FeatureFrames) -> Result<AdapterEmbeddings> {
        Ok(self.forward(store, frames)?.0)
    }

    /// Accumulates adapter gradients for upstream `dy` on the embeddings.
    /// The encoder is frozen, so the input gradient is returned only for
    /// inspection.
    pub fn backward(&self, store: &mut ParamStore, cache: &AdapterCache, dy: &Tensor) -> Result<Tensor> {
        let dc2 = self.ffn.backward(store, &cache.ffn, dy)?;
        let mut da1 = self.conv2.backward(store, &cache.a1, &dc2)?;
        for (d, c) in da1.data_mut().iter_mut().zip(cache.c1.data()) {
            *d *= silu_grad(*c);
        }
        self.conv1.backward(store, &cache.x, &da1)
    }
}
