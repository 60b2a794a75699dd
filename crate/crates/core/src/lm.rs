//! Toy decoder-only language model over mixed text-token / audio-embedding
//! input sequences.

use rand::Rng;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::embedding::Embedding;
use crate::nn::linear::Linear;
use crate::nn::ops::argmax;
use crate::nn::transformer::{Transformer, TransformerCache, TransformerConfig};
use crate::nn::ParamStore;
use crate::tags::{Age, Emotion, Gender};
use crate::tensor::Tensor;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const SEP: usize = 3;
const EMOTION_BASE: usize = 4;
const GENDER_BASE: usize = EMOTION_BASE + 7;
const AGE_BASE: usize = GENDER_BASE + 2;
/// First ordinary (non-reserved) token id.
pub const FIRST_CONTENT: usize = AGE_BASE + 3;

/// Id ↔ string mapping. Reserved ids come first; ordinary tokens are short
/// syllables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextVocab {
    tokens: Vec<String>,
}

impl TextVocab {
    pub fn new(size: usize) -> Result<Self> {
        if size <= FIRST_CONTENT {
            return Err(Error::Config(format!(
                "text vocabulary needs more than {FIRST_CONTENT} entries, got {size}"
            )));
        }
        let mut tokens: Vec<String> = ["<pad>", "<bos>", "<eos>", "<sep>"].map(String::from).to_vec();
        tokens.extend(Emotion::ALL.iter().map(|e| format!("<emo:{e}>")));
        tokens.extend(Gender::ALL.iter().map(|g| format!("<gender:{g}>")));
        tokens.extend(Age::ALL.iter().map(|a| format!("<age:{a}>")));
        const ONSETS: &[&str] = &[
            "b", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z",
        ];
        const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
        for i in 0..size - FIRST_CONTENT {
            let word = if i < ONSETS.len() * NUCLEI.len() {
                format!("{}{}", ONSETS[i % ONSETS.len()], NUCLEI[i / ONSETS.len()])
            } else {
                format!("w{}", i + FIRST_CONTENT)
            };
            tokens.push(word);
        }
        Ok(Self { tokens })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn emotion_tag(&self, e: Emotion) -> usize {
        EMOTION_BASE + e.index()
    }

    pub fn gender_tag(&self, g: Gender) -> usize {
        GENDER_BASE + g.index()
    }

    pub fn age_tag(&self, a: Age) -> usize {
        AGE_BASE + a.index()
    }

    pub fn content_ids(&self) -> std::ops::Range<usize> {
        FIRST_CONTENT..self.size()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == token)
    }

    /// Whitespace tokenization; unknown words are an error.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.split_whitespace()
            .map(|w| self.id(w).ok_or_else(|| Error::UnknownToken(w.to_string())))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or("<unk>"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One token per line; the line number is the id.
    pub fn to_file_string(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_file_string(text: &str) -> Result<Self> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        let reference = Self::new(tokens.len())?;
        for id in 0..FIRST_CONTENT {
            if tokens[id] != reference.tokens[id] {
                return Err(Error::Config(format!(
                    "reserved id {id} must be `{}`, found `{}`",
                    reference.tokens[id], tokens[id]
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for t in &tokens {
            if t.is_empty() || t.chars().any(char::is_whitespace) || !seen.insert(t.as_str()) {
                return Err(Error::Config(format!("invalid or duplicate token `{t}`")));
            }
        }
        Ok(Self { tokens })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SeqItem {
    Token(usize),
    /// An externally supplied input embedding of width `d_llm`.
    Embedding(Vec<f64>),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MixedSequence {
    items: Vec<SeqItem>,
}

impl MixedSequence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tokens(ids: &[usize]) -> Self {
        Self {
            items: ids.iter().map(|&id| SeqItem::Token(id)).collect(),
        }
    }

    pub fn push_token(&mut self, id: usize) -> &mut Self {
        self.items.push(SeqItem::Token(id));
        self
    }

    pub fn push_tokens(&mut self, ids: &[usize]) -> &mut Self {
        self.items.extend(ids.iter().map(|&id| SeqItem::Token(id)));
        self
    }

    pub fn push_embedding(&mut self, v: Vec<f64>) -> &mut Self {
        self.items.push(SeqItem::Embedding(v));
        self
    }

    /// Appends every row of a `[n, d]` tensor.
    pub fn push_embeddings(&mut self, rows: &Tensor) -> &mut Self {
        for t in 0..rows.rows() {
            self.items.push(SeqItem::Embedding(rows.row(t).to_vec()));
        }
        self
    }

    pub fn items(&self) -> &[SeqItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmConfig {
    pub vocab: usize,
    pub d_llm: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_len: usize,
    pub ffn_hidden: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            vocab: 128,
            d_llm: 64,
            layers: 2,
            heads: 2,
            max_len: 512,
            ffn_hidden: 256,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmOutput {
    /// `[T, vocab]`.
    pub logits: Tensor,
    /// Final-layer states `[T, d_llm]`.
    pub hidden: Tensor,
}

#[derive(Clone, Debug)]
pub struct LmCache {
    tf: TransformerCache,
    hidden: Tensor,
    tokens: Vec<Option<usize>>,
}

#[derive(Clone, Debug)]
pub struct MicroLm {
    pub cfg: LmConfig,
    pub embed: Embedding,
    pub tf: Transformer,
    pub head: Linear,
}

impl MicroLm {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, cfg: LmConfig, rng: &mut R) -> Result<Self> {
        let tf_cfg = TransformerConfig {
            dim: cfg.d_llm,
            layers: cfg.layers,
            heads: cfg.heads,
            ffn_hidden: cfg.ffn_hidden,
            max_len: cfg.max_len,
        };
        Ok(Self {
            embed: Embedding::new(store, "llm.embed", cfg.vocab, cfg.d_llm, rng)?,
            tf: Transformer::new(store, "llm", tf_cfg, rng)?,
            head: Linear::new(store, "llm.head", cfg.d_llm, cfg.vocab, false, rng)?,
            cfg,
        })
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len > self.cfg.max_len {
            return Err(Error::LengthOverflow {
                len,
                max: self.cfg.max_len,
            });
        }
        Ok(())
    }

    fn embed_item(&self, store: &ParamStore, item: &SeqItem) -> Result<Vec<f64>> {
        match item {
            SeqItem::Token(id) => Ok(self.embed.lookup(store, *id)?.to_vec()),
            SeqItem::Embedding(v) => {
                if v.len() != self.cfg.d_llm {
                    return Err(Error::DimensionMismatch {
                        expected: self.cfg.d_llm,
                        actual: v.len(),
                    });
                }
                Ok(v.clone())
            }
        }
    }

    pub fn forward(&self, store: &ParamStore, seq: &MixedSequence) -> Result<(LmOutput, LmCache)> {
        self.check_len(seq.len())?;
        let mut x = Tensor::zeros(&[seq.len(), self.cfg.d_llm]);
        let mut tokens = Vec::with_capacity(seq.len());
        for (t, item) in seq.items().iter().enumerate() {
            x.row_mut(t).copy_from_slice(&self.embed_item(store, item)?);
            tokens.push(match item {
                SeqItem::Token(id) => Some(*id),
                SeqItem::Embedding(_) => None,
            });
        }
        let (hidden, tf) = self.tf.forward(store, &x)?;
        let logits = self.head.forward(store, &hidden)?;
        Ok((
            LmOutput {
                logits,
                hidden: hidden.clone(),
            },
            LmCache { tf, hidden, tokens },
        ))
    }

    pub fn lm_forward(&self, store: &ParamStore, seq: &MixedSequence) -> Result<LmOutput> {
        Ok(self.forward(store, seq)?.0)
    }

    /// Backpropagates gradients on the logits and/or the hidden states.
    /// Returns the gradient with respect to every input row; rows that came
    /// from external embeddings are what an upstream adapter consumes.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &LmCache,
        dlogits: Option<&Tensor>,
        dhidden: Option<&Tensor>,
    ) -> Result<Tensor> {
        let mut dh = match dlogits {
            Some(d) => self.head.backward(store, &cache.hidden, d)?,
            None => Tensor::zeros(cache.hidden.shape()),
        };
        if let Some(d) = dhidden {
            dh.add_assign(d)?;
        }
        let dx = self.tf.backward(store, &cache.tf, &dh)?;
        self.embed.backward(store, &cache.tokens, &dx)?;
        Ok(dx)
    }

    /// Greedy decoding after `prefix`. Stops after `max_new` tokens or once
    /// EOS is produced; a produced EOS is the last element of the result.
    pub fn generate_continuation(
        &self,
        store: &ParamStore,
        prefix: &MixedSequence,
        max_new: usize,
    ) -> Result<Vec<usize>> {
        self.check_len(prefix.len() + max_new)?;
        if max_new == 0 {
            return Ok(Vec::new());
        }
        if prefix.is_empty() {
            return Err(Error::Config("generation needs a non-empty prefix".into()));
        }
        let mut state = self.tf.start();
        let mut last = Vec::new();
        for item in prefix.items() {
            last = self.tf.step(store, &mut state, &self.embed_item(store, item)?)?;
        }
        let mut out = Vec::with_capacity(max_new);
        let mut logits = vec![0.0; self.cfg.vocab];
        for i in 0..max_new {
            self.head.forward_row(store, &last, &mut logits);
            let tok = argmax(&logits);
            out.push(tok);
            if tok == EOS || i + 1 == max_new {
                break;
            }
            last = self.tf.step(store, &mut state, self.embed.lookup(store, tok)?)?;
        }
        Ok(out)
    }

    /// Final-layer states at the response positions of a teacher-forced pass
    /// over `prompt ++ response`.
    pub fn response_hidden_states(
        &self,
        store: &ParamStore,
        prompt: &MixedSequence,
        response: &[usize],
    ) -> Result<Tensor> {
        let mut seq = prompt.clone();
        seq.push_tokens(response);
        self.check_len(seq.len())?;
        if response.is_empty() {
            return Ok(Tensor::zeros(&[0, self.cfg.d_llm]));
        }
        let out = self.lm_forward(store, &seq)?;
        Ok(out.hidden.slice_rows(prompt.len(), seq.len()))
    }
}
