use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rates of the streaming pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateConfig {
    /// Encoder feature frames per second.
    pub encoder_hz: f64,
    /// Adapter embeddings per second (encoder rate / 4).
    pub adapter_hz: f64,
    /// Discrete speech tokens per second.
    pub speech_token_hz: f64,
    /// Audio samples per second.
    pub sample_rate: u32,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            encoder_hz: 25.0,
            adapter_hz: 6.25,
            speech_token_hz: 12.5,
            sample_rate: 16_000,
        }
    }
}

impl RateConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.encoder_hz, self.adapter_hz, self.speech_token_hz];
        if positive.iter().any(|r| !r.is_finite() || *r <= 0.0) || self.sample_rate == 0 {
            return Err(Error::Config("all rates must be strictly positive".into()));
        }
        if self.encoder_hz != 4.0 * self.adapter_hz {
            return Err(Error::Config(format!(
                "encoder rate {} must be 4x the adapter rate {}",
                self.encoder_hz, self.adapter_hz
            )));
        }
        let hop = f64::from(self.sample_rate) / self.encoder_hz;
        if hop.fract() != 0.0 {
            return Err(Error::Config(format!(
                "sample rate {} is not divisible by the encoder rate {}",
                self.sample_rate, self.encoder_hz
            )));
        }
        let per_token = f64::from(self.sample_rate) / self.speech_token_hz;
        if per_token.fract() != 0.0 {
            return Err(Error::Config(format!(
                "sample rate {} is not divisible by the speech token rate {}",
                self.sample_rate, self.speech_token_hz
            )));
        }
        Ok(())
    }

    /// Samples per encoder frame (640 at the defaults).
    pub fn encoder_hop(&self) -> usize {
        (f64::from(self.sample_rate) / self.encoder_hz) as usize
    }

    /// Samples per speech token (1,280 at the defaults).
    pub fn samples_per_token(&self) -> usize {
        (f64::from(self.sample_rate) / self.speech_token_hz) as usize
    }
}

/// Interleave ratio and vocoder chunk size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    /// Hidden states consumed per block.
    pub m_hidden: usize,
    /// Speech tokens emitted per block.
    pub n_tokens: usize,
    /// Speech tokens per vocoder chunk.
    pub chunk_tokens: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            m_hidden: 4,
            n_tokens: 8,
            chunk_tokens: 4,
        }
    }
}

impl ScheduleConfig {
    pub fn new(m_hidden: usize, n_tokens: usize, chunk_tokens: usize) -> Result<Self> {
        let cfg = Self {
            m_hidden,
            n_tokens,
            chunk_tokens,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_hidden == 0 || self.n_tokens == 0 || self.chunk_tokens == 0 {
            return Err(Error::Config(
                "m_hidden, n_tokens and chunk_tokens must all be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_consistent() {
        let rates = RateConfig::default();
        rates.validate().unwrap();
        assert_eq!(rates.encoder_hop(), 640);
        assert_eq!(rates.samples_per_token(), 1280);
        ScheduleConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_broken_rates() {
        let mut rates = RateConfig {
            adapter_hz: 5.0,
            ..RateConfig::default()
        };
        assert!(rates.validate().is_err());
        rates = RateConfig {
            sample_rate: 16_001,
            ..RateConfig::default()
        };
        assert!(rates.validate().is_err());
        assert!(ScheduleConfig::new(0, 8, 4).is_err());
    }
}
