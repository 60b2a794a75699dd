//! Analytic first-audio latency and the discrete-event simulation it must
//! agree with.
//!
//! The simulated pipeline has three single-server stages running
//! concurrently: the LLM produces one hidden state every `cost_hidden`
//! seconds, the speech decoder emits each block's tokens once the block's
//! hidden states exist, and the vocoder synthesizes a chunk whenever
//! `chunk_tokens` tokens are pending or a decoder block ends with tokens
//! pending.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use super::ScheduleConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyParams {
    /// Seconds per LLM hidden state.
    pub cost_hidden: f64,
    /// Seconds per decoder speech token.
    pub cost_speech_token: f64,
    /// Seconds per vocoder chunk.
    pub cost_chunk_synth: f64,
}

impl LatencyParams {
    pub fn validate(&self) -> Result<()> {
        let costs = [self.cost_hidden, self.cost_speech_token, self.cost_chunk_synth];
        if costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Config("latency costs must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Time until the first waveform sample exists, assuming the response has at
/// least `m_hidden` hidden states and enough speech for the first chunk.
pub fn first_audio_latency(cfg: &ScheduleConfig, p: &LatencyParams) -> f64 {
    let wait = cfg.n_tokens.min(cfg.chunk_tokens);
    cfg.m_hidden as f64 * p.cost_hidden + wait as f64 * p.cost_speech_token + p.cost_chunk_synth
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Workload {
    pub hidden: usize,
    pub speech: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChunkEvent {
    pub start_token: usize,
    pub end_token: usize,
    /// When the chunk's last token was emitted.
    pub ready: f64,
    /// When the vocoder finished the chunk.
    pub done: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimTrace {
    pub chunks: Vec<ChunkEvent>,
    pub token_times: Vec<f64>,
}

impl SimTrace {
    pub fn first_audio(&self) -> Option<f64> {
        self.chunks.first().map(|c| c.done)
    }

    /// Mean interval between consecutive chunk completions.
    pub fn cadence(&self) -> Option<f64> {
        if self.chunks.len() < 2 {
            return None;
        }
        let span = self.chunks.last().unwrap().done - self.chunks[0].done;
        Some(span / (self.chunks.len() - 1) as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum EventKind {
    HiddenReady,
    TokenDone { last_in_block: bool },
    ChunkDone,
}

#[derive(Clone, Copy, Debug)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Min-heap on (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Sim {
    queue: BinaryHeap<Event>,
    seq: u64,
}

impl Sim {
    fn push(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }
}

/// Runs the event simulation for one response.
pub fn simulate(cfg: &ScheduleConfig, p: &LatencyParams, work: Workload) -> SimTrace {
    // Each decoder block: (hidden states required so far, tokens to emit).
    // As in streaming decoding, every M-th hidden state releases up to N
    // tokens and the drain after the last hidden state is a block of its own.
    let mut blocks: Vec<(usize, usize)> = Vec::new();
    let mut left = work.speech;
    for consumed in 1..=work.hidden {
        if consumed % cfg.m_hidden == 0 && left > 0 {
            let n = left.min(cfg.n_tokens);
            blocks.push((consumed, n));
            left -= n;
        }
    }
    if left > 0 {
        blocks.push((work.hidden, left));
    }

    let mut sim = Sim {
        queue: BinaryHeap::new(),
        seq: 0,
    };
    for i in 1..=work.hidden {
        sim.push(i as f64 * p.cost_hidden, EventKind::HiddenReady);
    }

    let mut trace = SimTrace::default();
    let mut hidden_ready = 0usize;
    let mut next_block = 0usize;
    let mut decoder_busy = false;
    let mut tokens_emitted = 0usize;
    let mut pending_from = 0usize;
    let mut vocoder_busy = false;
    let mut backlog: VecDeque<(usize, usize, f64)> = VecDeque::new();

    let start_block = |sim: &mut Sim, now: f64, tokens: usize| {
        for k in 1..=tokens {
            sim.push(
                now + k as f64 * p.cost_speech_token,
                EventKind::TokenDone {
                    last_in_block: k == tokens,
                },
            );
        }
    };

    // Blocks that need no hidden state start at t = 0.
    if let Some(&(0, tokens)) = blocks.first() {
        decoder_busy = true;
        next_block = 1;
        start_block(&mut sim, 0.0, tokens);
    }

    while let Some(event) = sim.queue.pop() {
        let now = event.time;
        match event.kind {
            EventKind::HiddenReady => hidden_ready += 1,
            EventKind::TokenDone { last_in_block } => {
                tokens_emitted += 1;
                trace.token_times.push(now);
                let pending = tokens_emitted - pending_from;
                if pending == cfg.chunk_tokens || (last_in_block && pending > 0) {
                    backlog.push_back((pending_from, tokens_emitted, now));
                    pending_from = tokens_emitted;
                }
                if last_in_block {
                    decoder_busy = false;
                }
            }
            EventKind::ChunkDone => vocoder_busy = false,
        }

        if !vocoder_busy {
            if let Some((start, end, ready)) = backlog.pop_front() {
                let done = now + p.cost_chunk_synth;
                trace.chunks.push(ChunkEvent {
                    start_token: start,
                    end_token: end,
                    ready,
                    done,
                });
                vocoder_busy = true;
                sim.push(done, EventKind::ChunkDone);
            }
        }
        if !decoder_busy {
            if let Some(&(needed, tokens)) = blocks.get(next_block) {
                if hidden_ready >= needed {
                    decoder_busy = true;
                    next_block += 1;
                    start_block(&mut sim, now, tokens);
                }
            }
        }
    }
    trace
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(h: f64, s: f64, c: f64) -> LatencyParams {
        LatencyParams {
            cost_hidden: h,
            cost_speech_token: s,
            cost_chunk_synth: c,
        }
    }

    #[test]
    fn default_schedule_latency() {
        let cfg = ScheduleConfig::default();
        let p = params(0.010, 0.005, 0.020);
        let analytic = first_audio_latency(&cfg, &p);
        assert!((analytic - 0.080).abs() < 1e-15);
        let trace = simulate(&cfg, &p, Workload { hidden: 16, speech: 40 });
        assert_eq!(trace.first_audio(), Some(analytic));
    }

    #[test]
    fn zero_costs() {
        let cfg = ScheduleConfig::default();
        let p = params(0.0, 0.0, 0.0);
        assert_eq!(first_audio_latency(&cfg, &p), 0.0);
        let trace = simulate(&cfg, &p, Workload { hidden: 8, speech: 16 });
        assert_eq!(trace.first_audio(), Some(0.0));
    }

    #[test]
    fn block_end_flushes_partial_chunk() {
        let cfg = ScheduleConfig::new(2, 3, 4).unwrap();
        let p = params(0.01, 0.01, 0.01);
        let trace = simulate(&cfg, &p, Workload { hidden: 4, speech: 6 });
        assert_eq!(trace.chunks[0].start_token, 0);
        assert_eq!(trace.chunks[0].end_token, 3);
        assert_eq!(trace.first_audio(), Some(first_audio_latency(&cfg, &p)));
        let covered: usize = trace.chunks.iter().map(|c| c.end_token - c.start_token).sum();
        assert_eq!(covered, 6);
    }

    #[test]
    fn every_token_is_synthesized() {
        let cfg = ScheduleConfig::default();
        let p = params(0.01, 0.004, 0.03);
        let trace = simulate(&cfg, &p, Workload { hidden: 10, speech: 30 });
        assert_eq!(trace.token_times.len(), 30);
        assert_eq!(trace.chunks.last().unwrap().end_token, 30);
        assert!(trace.cadence().unwrap() > 0.0);
        for w in trace.chunks.windows(2) {
            assert!(w[1].done >= w[0].done);
        }
    }
}
