//! Speech decoder: a decoder-only transformer over text ids, speech ids and
//! speech control ids. It reads projected LLM hidden states and emits speech
//! tokens on the M:N interleave schedule.

use rand::Rng;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::embedding::Embedding;
use crate::nn::linear::Linear;
use crate::nn::loss::{softmax_cross_entropy, CrossEntropy};
use crate::nn::ops::argmax;
use crate::nn::transformer::{Transformer, TransformerCache, TransformerConfig, TransformerState};
use crate::nn::ParamStore;
use crate::stream::{interleave_layout, loss_mask, ScheduleConfig, Slot};
use crate::tensor::Tensor;
use crate::tokenizer::SpeechTokenSequence;

/// Id layout: `[0, text)` text, `[text, text + V)` speech codes, then
/// EOS_SP, BOS_SP, PAD_SP.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecoderVocab {
    pub text: usize,
    pub speech: usize,
}

impl DecoderVocab {
    pub fn size(&self) -> usize {
        self.text + self.speech + 3
    }

    pub fn speech_id(&self, code: usize) -> Result<usize> {
        if code >= self.speech {
            return Err(Error::TokenOutOfRange {
                id: code,
                size: self.speech,
            });
        }
        Ok(self.text + code)
    }

    /// Speech code of a decoder id, if it is one.
    pub fn code(&self, id: usize) -> Option<usize> {
        (self.text..self.text + self.speech)
            .contains(&id)
            .then(|| id - self.text)
    }

    pub fn eos(&self) -> usize {
        self.text + self.speech
    }

    pub fn bos(&self) -> usize {
        self.text + self.speech + 1
    }

    pub fn pad(&self) -> usize {
        self.text + self.speech + 2
    }

    /// Ids the decoder may emit in speech mode: every speech code and EOS_SP.
    pub fn emission_range(&self) -> std::ops::Range<usize> {
        self.text..self.eos() + 1
    }

    pub fn is_text(&self, id: usize) -> bool {
        id < self.text
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub d_llm: usize,
    pub d_dec: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    pub max_len: usize,
    pub text_vocab: usize,
    pub codebook: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            d_llm: 64,
            d_dec: 48,
            layers: 2,
            heads: 2,
            ffn_hidden: 192,
            max_len: 512,
            text_vocab: 128,
            codebook: 256,
        }
    }
}

impl DecoderConfig {
    pub fn vocab(&self) -> DecoderVocab {
        DecoderVocab {
            text: self.text_vocab,
            speech: self.codebook,
        }
    }
}

/// Input of one decoder position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecoderInput {
    /// Row of the hidden-state matrix, projected to `d_dec`.
    Hidden(usize),
    /// Decoder-vocabulary id looked up in the embedding table.
    Token(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSequence {
    /// Hidden states `[h, d_llm]` referenced by `Hidden` inputs.
    pub hidden: Tensor,
    pub inputs: Vec<DecoderInput>,
    /// Next-token targets; only positions with `mask` set enter the loss.
    pub targets: Vec<Option<usize>>,
    pub mask: Vec<bool>,
}

impl TrainingSequence {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn effective_targets(&self) -> Vec<Option<usize>> {
        self.targets
            .iter()
            .zip(&self.mask)
            .map(|(t, &m)| if m { *t } else { None })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct DecoderCache {
    hidden: Tensor,
    projected: Tensor,
    hidden_slots: Vec<(usize, usize)>,
    tokens: Vec<Option<usize>>,
    tf: TransformerCache,
    out: Tensor,
    pub ce: CrossEntropy,
    pub logits: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamPhase {
    Interleaving,
    Draining,
    Done,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StreamEvent {
    PushHidden(Vec<f64>),
    FinishHidden,
}

#[derive(Clone, Debug)]
pub struct StreamState {
    pub consumed_hidden: usize,
    pub emitted: Vec<usize>,
    pub phase: StreamPhase,
    finished: bool,
    max_tokens: usize,
    prev: usize,
    tf: TransformerState,
}

impl StreamState {
    pub fn is_done(&self) -> bool {
        self.phase == StreamPhase::Done
    }
}

#[derive(Clone, Debug)]
pub struct SpeechDecoder {
    pub cfg: DecoderConfig,
    pub schedule: ScheduleConfig,
    pub vocab: DecoderVocab,
    pub proj: Linear,
    pub embed: Embedding,
    pub tf: Transformer,
    pub head: Linear,
}

impl SpeechDecoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        cfg: DecoderConfig,
        schedule: ScheduleConfig,
        rng: &mut R,
    ) -> Result<Self> {
        schedule.validate()?;
        let vocab = cfg.vocab();
        let tf_cfg = TransformerConfig {
            dim: cfg.d_dec,
            layers: cfg.layers,
            heads: cfg.heads,
            ffn_hidden: cfg.ffn_hidden,
            max_len: cfg.max_len,
        };
        Ok(Self {
            proj: Linear::new(store, "projection", cfg.d_llm, cfg.d_dec, true, rng)?,
            embed: Embedding::new(store, "speech_decoder.embed", vocab.size(), cfg.d_dec, rng)?,
            tf: Transformer::new(store, "speech_decoder", tf_cfg, rng)?,
            head: Linear::new(store, "speech_decoder.head", cfg.d_dec, vocab.size(), false, rng)?,
            cfg,
            schedule,
            vocab,
        })
    }

    fn target_ids(&self, speech: &SpeechTokenSequence) -> Result<Vec<usize>> {
        let mut ids = speech
            .ids
            .iter()
            .map(|&c| self.vocab.speech_id(c))
            .collect::<Result<Vec<_>>>()?;
        ids.push(self.vocab.eos());
        Ok(ids)
    }

    /// Interleaved sequence for `h` hidden states and `s` speech tokens plus
    /// EOS_SP. Each speech slot is fed the previous token (BOS_SP first) and
    /// predicts its own token.
    pub fn build_training_sequence(&self, hidden: &Tensor, speech: &SpeechTokenSequence) -> Result<TrainingSequence> {
        if hidden.rows() > 0 {
            hidden.expect_width("decoder hidden states", self.cfg.d_llm)?;
        }
        let targets_sp = self.target_ids(speech)?;
        let layout = interleave_layout(hidden.rows(), targets_sp.len(), &self.schedule);
        let mut inputs = Vec::with_capacity(layout.len());
        let mut targets = Vec::with_capacity(layout.len());
        let (mut hi, mut si) = (0, 0);
        for slot in layout.slots() {
            match slot {
                Slot::Hidden => {
                    inputs.push(DecoderInput::Hidden(hi));
                    targets.push(None);
                    hi += 1;
                }
                Slot::Speech => {
                    let prev = if si == 0 { self.vocab.bos() } else { targets_sp[si - 1] };
                    inputs.push(DecoderInput::Token(prev));
                    targets.push(Some(targets_sp[si]));
                    si += 1;
                }
            }
        }
        let hidden = if hidden.rows() == 0 {
            Tensor::zeros(&[0, self.cfg.d_llm])
        } else {
            hidden.clone()
        };
        Ok(TrainingSequence {
            hidden,
            inputs,
            targets,
            mask: loss_mask(&layout),
        })
    }

    /// Text-prefix sequence for offline TTS training: text ids, then the
    /// speech tokens and EOS_SP.
    pub fn build_tts_sequence(&self, text: &[usize], speech: &SpeechTokenSequence) -> Result<TrainingSequence> {
        if let Some(&bad) = text.iter().find(|&&t| !self.vocab.is_text(t)) {
            return Err(Error::TokenOutOfRange {
                id: bad,
                size: self.vocab.text,
            });
        }
        let targets_sp = self.target_ids(speech)?;
        let mut inputs: Vec<DecoderInput> = text.iter().map(|&t| DecoderInput::Token(t)).collect();
        let mut targets = vec![None; text.len()];
        let mut mask = vec![false; text.len()];
        for (i, &t) in targets_sp.iter().enumerate() {
            let prev = if i == 0 { self.vocab.bos() } else { targets_sp[i - 1] };
            inputs.push(DecoderInput::Token(prev));
            targets.push(Some(t));
            mask.push(true);
        }
        Ok(TrainingSequence {
            hidden: Tensor::zeros(&[0, self.cfg.d_llm]),
            inputs,
            targets,
            mask,
        })
    }

    pub fn forward(&self, store: &ParamStore, seq: &TrainingSequence) -> Result<DecoderCache> {
        if seq.targets.len() != seq.len() || seq.mask.len() != seq.len() {
            return Err(crate::error::shape_mismatch(
                "decoder targets",
                &[seq.len()],
                &[seq.targets.len().min(seq.mask.len())],
            ));
        }
        seq.hidden.expect_width("decoder hidden states", self.cfg.d_llm)?;
        let projected = self.proj.forward(store, &seq.hidden)?;
        let mut x = Tensor::zeros(&[seq.len(), self.cfg.d_dec]);
        let mut hidden_slots = Vec::new();
        let mut tokens = Vec::with_capacity(seq.len());
        for (t, input) in seq.inputs.iter().enumerate() {
            match *input {
                DecoderInput::Hidden(i) => {
                    if i >= seq.hidden.rows() {
                        return Err(Error::TokenOutOfRange {
                            id: i,
                            size: seq.hidden.rows(),
                        });
                    }
                    x.row_mut(t).copy_from_slice(projected.row(i));
                    hidden_slots.push((t, i));
                    tokens.push(None);
                }
                DecoderInput::Token(id) => {
                    x.row_mut(t).copy_from_slice(self.embed.lookup(store, id)?);
                    tokens.push(Some(id));
                }
            }
        }
        let (out, tf) = self.tf.forward(store, &x)?;
        let logits = self.head.forward(store, &out)?;
        let ce = softmax_cross_entropy(&logits, &seq.effective_targets())?;
        Ok(DecoderCache {
            hidden: seq.hidden.clone(),
            projected,
            hidden_slots,
            tokens,
            tf,
            out,
            ce,
            logits,
        })
    }

    pub fn loss(&self, store: &ParamStore, seq: &TrainingSequence) -> Result<f64> {
        Ok(self.forward(store, seq)?.ce.loss)
    }

    /// Accumulates gradients of `upstream * loss`; returns the gradient with
    /// respect to the hidden-state rows `[h, d_llm]`.
    pub fn backward(&self, store: &mut ParamStore, cache: &DecoderCache, upstream: f64) -> Result<Tensor> {
        let dlogits = cache.ce.backward(upstream);
        let dout = self.head.backward(store, &cache.out, &dlogits)?;
        let dx = self.tf.backward(store, &cache.tf, &dout)?;
        self.embed.backward(store, &cache.tokens, &dx)?;
        let mut dproj = Tensor::zeros(cache.projected.shape());
        for &(t, i) in &cache.hidden_slots {
            for (g, d) in dproj.row_mut(i).iter_mut().zip(dx.row(t)) {
                *g += d;
            }
        }
        self.proj.backward(store, &cache.hidden, &dproj)
    }

    /// Greedy choice restricted to speech ids and EOS_SP.
    pub fn masked_argmax(&self, logits: &[f64]) -> usize {
        let range = self.vocab.emission_range();
        range.start + argmax(&logits[range])
    }

    /// Teacher-forced accuracy at the loss positions, using masked argmax.
    pub fn accuracy(&self, cache: &DecoderCache, seq: &TrainingSequence) -> (usize, usize) {
        let mut hits = 0;
        let mut total = 0;
        for (t, target) in seq.effective_targets().iter().enumerate() {
            if let Some(target) = target {
                total += 1;
                if self.masked_argmax(cache.logits.row(t)) == *target {
                    hits += 1;
                }
            }
        }
        (hits, total)
    }

    fn project_row(&self, store: &ParamStore, h: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.cfg.d_llm {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.d_llm,
                actual: h.len(),
            });
        }
        let mut out = vec![0.0; self.cfg.d_dec];
        self.proj.forward_row(store, h, &mut out);
        Ok(out)
    }

    /// Feeds `prev` and returns the greedy next id.
    fn next_token(&self, store: &ParamStore, tf: &mut TransformerState, prev: usize) -> Result<usize> {
        let out = self.tf.step(store, tf, self.embed.lookup(store, prev)?)?;
        let mut logits = vec![0.0; self.vocab.size()];
        self.head.forward_row(store, &out, &mut logits);
        Ok(self.masked_argmax(&logits))
    }

    /// Greedy decoding over a complete hidden sequence: blocks of M hidden
    /// states each followed by up to N tokens, then a drain. Returns decoder
    /// ids; a produced EOS_SP is the last element.
    pub fn decode_offline(&self, store: &ParamStore, hidden: &Tensor, max_tokens: usize) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        if max_tokens == 0 {
            return Ok(out);
        }
        hidden.expect_width("decoder hidden states", self.cfg.d_llm)?;
        let mut tf = self.tf.start();
        let mut prev = self.vocab.bos();
        let m = self.schedule.m_hidden;
        let block_tokens =
            |tf: &mut TransformerState, out: &mut Vec<usize>, budget: usize, prev: &mut usize| -> Result<bool> {
                for _ in 0..budget {
                    let tok = self.next_token(store, tf, *prev)?;
                    out.push(tok);
                    *prev = tok;
                    if tok == self.vocab.eos() || out.len() == max_tokens {
                        return Ok(true);
                    }
                }
                Ok(false)
            };
        let mut start = 0;
        while start < hidden.rows() {
            let end = (start + m).min(hidden.rows());
            for i in start..end {
                let x = self.project_row(store, hidden.row(i))?;
                self.tf.step(store, &mut tf, &x)?;
            }
            if end - start == m && block_tokens(&mut tf, &mut out, self.schedule.n_tokens, &mut prev)? {
                return Ok(out);
            }
            start = end;
        }
        block_tokens(&mut tf, &mut out, usize::MAX, &mut prev)?;
        Ok(out)
    }

    /// Greedy decoding after a text-token prefix, as trained offline.
    pub fn decode_tts(&self, store: &ParamStore, text: &[usize], max_tokens: usize) -> Result<Vec<usize>> {
        let mut tf = self.tf.start();
        for &t in text {
            if !self.vocab.is_text(t) {
                return Err(Error::TokenOutOfRange {
                    id: t,
                    size: self.vocab.text,
                });
            }
            self.tf.step(store, &mut tf, self.embed.lookup(store, t)?)?;
        }
        let mut out = Vec::new();
        let mut prev = self.vocab.bos();
        while out.len() < max_tokens {
            prev = self.next_token(store, &mut tf, prev)?;
            out.push(prev);
            if prev == self.vocab.eos() {
                break;
            }
        }
        Ok(out)
    }

    pub fn start_stream(&self, max_tokens: usize) -> StreamState {
        StreamState {
            consumed_hidden: 0,
            emitted: Vec::new(),
            phase: if max_tokens == 0 {
                StreamPhase::Done
            } else {
                StreamPhase::Interleaving
            },
            finished: false,
            max_tokens,
            prev: self.vocab.bos(),
            tf: self.tf.start(),
        }
    }

    fn emit(&self, store: &ParamStore, state: &mut StreamState, budget: usize) -> Result<Vec<usize>> {
        let mut fresh = Vec::new();
        for _ in 0..budget {
            if state.emitted.len() == state.max_tokens {
                state.phase = StreamPhase::Done;
                break;
            }
            let tok = self.next_token(store, &mut state.tf, state.prev)?;
            state.prev = tok;
            state.emitted.push(tok);
            fresh.push(tok);
            if tok == self.vocab.eos() {
                state.phase = StreamPhase::Done;
                break;
            }
        }
        if state.emitted.len() == state.max_tokens {
            state.phase = StreamPhase::Done;
        }
        Ok(fresh)
    }

    /// Advances a stream by one event and returns the ids emitted in response.
    pub fn stream_event(&self, store: &ParamStore, state: &mut StreamState, event: StreamEvent) -> Result<Vec<usize>> {
        match event {
            StreamEvent::PushHidden(h) => {
                if state.finished {
                    return Err(Error::Stream("hidden state pushed after FinishHidden"));
                }
                if state.is_done() {
                    return Err(Error::Stream("hidden state pushed after the stream ended"));
                }
                let x = self.project_row(store, &h)?;
                self.tf.step(store, &mut state.tf, &x)?;
                state.consumed_hidden += 1;
                if state.consumed_hidden % self.schedule.m_hidden == 0 {
                    self.emit(store, state, self.schedule.n_tokens)
                } else {
                    Ok(Vec::new())
                }
            }
            StreamEvent::FinishHidden => {
                state.finished = true;
                if state.is_done() {
                    return Ok(Vec::new());
                }
                state.phase = StreamPhase::Draining;
                self.emit(store, state, usize::MAX)
            }
        }
    }

    /// Pushes every row (stopping once the stream ends) and finishes.
    pub fn decode_streaming(&self, store: &ParamStore, hidden: &Tensor, max_tokens: usize) -> Result<Vec<Vec<usize>>> {
        let mut state = self.start_stream(max_tokens);
        let mut emissions = Vec::new();
        for i in 0..hidden.rows() {
            if state.is_done() {
                break;
            }
            emissions.push(self.stream_event(store, &mut state, StreamEvent::PushHidden(hidden.row(i).to_vec()))?);
        }
        emissions.push(self.stream_event(store, &mut state, StreamEvent::FinishHidden)?);
        Ok(emissions)
    }

    /// Strips EOS_SP and maps decoder ids back to speech codes.
    pub fn to_codes(&self, ids: &[usize]) -> SpeechTokenSequence {
        SpeechTokenSequence::new(ids.iter().filter_map(|&id| self.vocab.code(id)).collect())
    }
}
