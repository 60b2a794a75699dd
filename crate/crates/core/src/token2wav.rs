//! Chunked, causal token → waveform synthesis. Each token's code vector sets
//! the band amplitudes of an oscillator bank for one token period; phases
//! carry across chunks so chunk boundaries leave no trace in the output.

use crate::audio::OscillatorBank;
use crate::error::{Error, Result};
use crate::stream::{chunk_boundaries, RateConfig};
use crate::tokenizer::{Codebook, SpeechTokenSequence};

#[derive(Clone, Debug, PartialEq)]
pub struct VocoderState {
    pub phases: Vec<f64>,
    pub samples_emitted: usize,
    pub tokens_consumed: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveChunk {
    pub samples: Vec<f64>,
    pub token_span: (usize, usize),
}

#[derive(Clone, Debug)]
pub struct Vocoder {
    bank: OscillatorBank,
    samples_per_token: usize,
    sample_rate: u32,
}

impl Vocoder {
    pub fn new(rates: &RateConfig) -> Result<Self> {
        rates.validate()?;
        Ok(Self {
            bank: OscillatorBank::mel(rates.sample_rate),
            samples_per_token: rates.samples_per_token(),
            sample_rate: rates.sample_rate,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn samples_per_token(&self) -> usize {
        self.samples_per_token
    }

    pub fn start(&self) -> VocoderState {
        VocoderState {
            phases: vec![0.0; self.bank.bands()],
            samples_emitted: 0,
            tokens_consumed: 0,
        }
    }

    pub fn synth_chunk(&self, tokens: &[usize], book: &Codebook, state: &mut VocoderState) -> Result<WaveChunk> {
        if tokens.is_empty() {
            return Err(Error::Stream("a vocoder chunk needs at least one token"));
        }
        if book.dim() != self.bank.bands() {
            return Err(Error::DimensionMismatch {
                expected: self.bank.bands(),
                actual: book.dim(),
            });
        }
        for &id in tokens {
            book.code(id)?;
        }
        let mut samples = Vec::with_capacity(tokens.len() * self.samples_per_token);
        for &id in tokens {
            self.bank
                .render(book.code(id)?, &mut state.phases, self.samples_per_token, &mut samples);
        }
        let start = state.tokens_consumed;
        state.tokens_consumed += tokens.len();
        state.samples_emitted += samples.len();
        Ok(WaveChunk {
            samples,
            token_span: (start, state.tokens_consumed),
        })
    }

    pub fn synth_chunks(
        &self,
        tokens: &SpeechTokenSequence,
        chunk_tokens: usize,
        book: &Codebook,
    ) -> Result<Vec<WaveChunk>> {
        if chunk_tokens == 0 {
            return Err(Error::Config("chunk_tokens must be at least 1".into()));
        }
        let mut state = self.start();
        chunk_boundaries(tokens.len(), chunk_tokens)
            .into_iter()
            .map(|(a, b)| self.synth_chunk(&tokens.ids[a..b], book, &mut state))
            .collect()
    }

    pub fn synth_stream(&self, tokens: &SpeechTokenSequence, chunk_tokens: usize, book: &Codebook) -> Result<Vec<f64>> {
        Ok(self
            .synth_chunks(tokens, chunk_tokens, book)?
            .into_iter()
            .flat_map(|c| c.samples)
            .collect())
    }
}
