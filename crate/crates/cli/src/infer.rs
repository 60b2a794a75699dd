//! `infer`: encoder, adapter, LLM, speech decoder and vocoder end to end.
//! Streaming and offline decoding yield the same waveform; only the timing
//! trace differs.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use streamspeech_core::audio::{read_wav, wav_bytes};
use streamspeech_core::decoder::StreamEvent;
use streamspeech_core::lm::{MixedSequence, EOS};
use streamspeech_core::stream::LatencyParams;
use streamspeech_core::tensor::Tensor;
use streamspeech_core::token2wav::VocoderState;
use streamspeech_core::training::SpeechModel;

use crate::config::{InferSection, RunConfig};
use crate::error::{invalid, CliResult};
use crate::train::{checkpoint_path, Stage};

#[derive(Clone, Debug, PartialEq)]
pub enum InferInput {
    Wav(PathBuf),
    Text(String),
}

/// One vocoder chunk. `time_s` is the modelled completion time when every
/// hidden state, decoder step and chunk costs its configured amount and the
/// work runs in event order on one worker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChunkTrace {
    pub chunk: usize,
    pub start_token: usize,
    pub end_token: usize,
    pub hidden_consumed: usize,
    pub time_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferOutput {
    /// Encoder frames of the spoken query; `None` for text input.
    pub encoder_frames: Option<usize>,
    /// Response text ids without EOS.
    pub response: Vec<usize>,
    /// Speech codes in emission order.
    pub codes: Vec<usize>,
    /// Whether the decoder produced its end-of-speech token.
    pub eos: bool,
    pub samples: Vec<f64>,
    pub trace: Vec<ChunkTrace>,
}

/// Collects speech codes into vocoder chunks while advancing the cost clock.
struct ChunkSink<'a> {
    model: &'a SpeechModel,
    costs: LatencyParams,
    state: VocoderState,
    clock: f64,
    pending: Vec<usize>,
    codes: Vec<usize>,
    samples: Vec<f64>,
    trace: Vec<ChunkTrace>,
}

impl<'a> ChunkSink<'a> {
    fn new(model: &'a SpeechModel, costs: LatencyParams) -> Self {
        Self {
            model,
            costs,
            state: model.vocoder.start(),
            clock: 0.0,
            pending: Vec::new(),
            codes: Vec::new(),
            samples: Vec::new(),
            trace: Vec::new(),
        }
    }

    fn hidden(&mut self) {
        self.clock += self.costs.cost_hidden;
    }

    fn step(&mut self, id: usize, hidden_consumed: usize) -> streamspeech_core::Result<()> {
        self.clock += self.costs.cost_speech_token;
        if let Some(code) = self.model.decoder.vocab.code(id) {
            self.pending.push(code);
            self.codes.push(code);
            if self.pending.len() == self.model.cfg.schedule.chunk_tokens {
                self.flush(hidden_consumed)?;
            }
        }
        Ok(())
    }

    fn flush(&mut self, hidden_consumed: usize) -> streamspeech_core::Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let chunk = self
            .model
            .vocoder
            .synth_chunk(&self.pending, &self.model.codebook, &mut self.state)?;
        self.clock += self.costs.cost_chunk_synth;
        self.samples.extend(chunk.samples);
        self.trace.push(ChunkTrace {
            chunk: self.trace.len(),
            start_token: chunk.token_span.0,
            end_token: chunk.token_span.1,
            hidden_consumed,
            time_s: self.clock,
        });
        self.pending.clear();
        Ok(())
    }
}

fn empty_output(encoder_frames: Option<usize>) -> InferOutput {
    InferOutput {
        encoder_frames,
        response: Vec::new(),
        codes: Vec::new(),
        eos: false,
        samples: Vec::new(),
        trace: Vec::new(),
    }
}

/// Prompt for the LLM, or `None` when the input carries no content.
fn prompt(model: &SpeechModel, input: &InferInput) -> CliResult<(Option<MixedSequence>, Option<usize>)> {
    match input {
        InferInput::Wav(path) => {
            if !path.is_file() {
                return Err(invalid(format!("input audio {} does not exist", path.display())));
            }
            let wave = read_wav(path, model.cfg.rates.sample_rate)?;
            let frames = model.encode(&wave)?;
            let emb = model.adapt(&frames)?;
            let n = frames.len();
            Ok(((emb.data.rows() > 0).then(|| model.speech_prompt(&emb.data)), Some(n)))
        }
        InferInput::Text(text) => {
            let ids = model.vocab.encode(text)?;
            Ok(((!ids.is_empty()).then(|| model.text_prompt(None, &ids)), None))
        }
    }
}

fn decode_streaming<'a>(
    model: &'a SpeechModel,
    hidden: &Tensor,
    sec: &InferSection,
) -> CliResult<(ChunkSink<'a>, bool)> {
    let dec = &model.decoder;
    let mut sink = ChunkSink::new(model, sec.costs);
    let mut state = dec.start_stream(sec.max_speech_tokens);
    let mut eos = false;
    let mut consumed = 0;
    for i in 0..hidden.rows() {
        if state.is_done() {
            break;
        }
        sink.hidden();
        consumed = i + 1;
        let fresh = dec.stream_event(
            &model.store,
            &mut state,
            StreamEvent::PushHidden(hidden.row(i).to_vec()),
        )?;
        for &id in &fresh {
            eos |= id == dec.vocab.eos();
            sink.step(id, consumed)?;
        }
        if !fresh.is_empty() {
            sink.flush(consumed)?;
        }
    }
    for id in dec.stream_event(&model.store, &mut state, StreamEvent::FinishHidden)? {
        eos |= id == dec.vocab.eos();
        sink.step(id, consumed)?;
    }
    sink.flush(consumed)?;
    Ok((sink, eos))
}

fn decode_offline<'a>(model: &'a SpeechModel, hidden: &Tensor, sec: &InferSection) -> CliResult<(ChunkSink<'a>, bool)> {
    let dec = &model.decoder;
    let mut sink = ChunkSink::new(model, sec.costs);
    for _ in 0..hidden.rows() {
        sink.hidden();
    }
    let ids = dec.decode_offline(&model.store, hidden, sec.max_speech_tokens)?;
    for &id in &ids {
        sink.step(id, hidden.rows())?;
    }
    sink.flush(hidden.rows())?;
    Ok((sink, ids.last() == Some(&dec.vocab.eos())))
}

pub fn infer(model: &SpeechModel, sec: &InferSection, input: &InferInput, streaming: bool) -> CliResult<InferOutput> {
    let (prompt, encoder_frames) = prompt(model, input)?;
    let Some(prompt) = prompt else {
        return Ok(empty_output(encoder_frames));
    };
    let mut response = model
        .lm
        .generate_continuation(&model.store, &prompt, sec.max_response)?;
    if response.last() == Some(&EOS) {
        response.pop();
    }
    if response.is_empty() {
        return Ok(empty_output(encoder_frames));
    }
    let hidden = model.lm.response_hidden_states(&model.store, &prompt, &response)?;
    let (sink, eos) = if streaming {
        decode_streaming(model, &hidden, sec)?
    } else {
        decode_offline(model, &hidden, sec)?
    };
    Ok(InferOutput {
        encoder_frames,
        response,
        codes: sink.codes,
        eos,
        samples: sink.samples,
        trace: sink.trace,
    })
}

/// One code per line, then the `#EOS` sentinel.
pub fn token_dump(codes: &[usize]) -> String {
    let mut out = String::new();
    for c in codes {
        out.push_str(&format!("{c}\n"));
    }
    out.push_str("#EOS\n");
    out
}

pub fn trace_jsonl(trace: &[ChunkTrace]) -> String {
    trace
        .iter()
        .map(|t| serde_json::to_string(t).expect("trace serializes") + "\n")
        .collect()
}

pub fn load_model(cfg: &RunConfig, checkpoint: Option<&Path>) -> CliResult<SpeechModel> {
    let path = checkpoint.map_or_else(|| checkpoint_path(cfg, Stage::Joint), Path::to_path_buf);
    if !path.exists() {
        return Err(invalid(format!(
            "inference needs checkpoint {}; run `train --stage 3` first or pass --checkpoint",
            path.display()
        )));
    }
    let bytes = std::fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(SpeechModel::from_checkpoint(cfg.model_config(), &bytes)
        .with_context(|| format!("checkpoint {} does not match the configured model", path.display()))?)
}

/// Writes `response.wav`, `tokens.txt`, `response.txt` and `timing.jsonl`
/// under `<infer>/<streaming|offline>/` and returns that directory.
pub fn cmd_infer(
    cfg: &RunConfig,
    input: &InferInput,
    streaming: bool,
    checkpoint: Option<&Path>,
) -> CliResult<(PathBuf, InferOutput)> {
    let model = load_model(cfg, checkpoint)?;
    let out = infer(&model, &cfg.infer, input, streaming)?;
    let dir = cfg.infer_dir().join(if streaming { "streaming" } else { "offline" });
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let write = |name: &str, bytes: &[u8]| -> CliResult<()> {
        let p = dir.join(name);
        std::fs::write(&p, bytes).with_context(|| format!("cannot write {}", p.display()))?;
        Ok(())
    };
    write("response.wav", &wav_bytes(&out.samples, model.cfg.rates.sample_rate)?)?;
    write("tokens.txt", token_dump(&out.codes).as_bytes())?;
    write("response.txt", (model.vocab.decode(&out.response) + "\n").as_bytes())?;
    write("timing.jsonl", trace_jsonl(&out.trace).as_bytes())?;
    match out.encoder_frames {
        Some(n) => log::info!("infer: spoken query, {n} encoder frames"),
        None => log::info!("infer: text query, audio encoder not used"),
    }
    log::info!(
        "infer: {} response tokens, {} speech tokens, {} chunks, eos {}, first chunk at {:.4} s (modelled)",
        out.response.len(),
        out.codes.len(),
        out.trace.len(),
        out.eos,
        out.trace.first().map_or(0.0, |t| t.time_s)
    );
    Ok((dir, out))
}
