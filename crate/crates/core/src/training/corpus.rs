//! Seeded synthetic corpora. Words are rendered by a fixed reference
//! synthesizer: each word is two token-length syllables whose band
//! amplitudes are drawn from a per-(voice, word, syllable) seed and scaled by
//! a per-emotion gain.

use rand::seq::SliceRandom;
use rand::Rng;

use super::stages::{AlignmentPair, Stage1Variant, Stage3Input, Stage3Sample, StreamingSample, TtsPair};
use super::SpeechModel;
use crate::audio::{mel_frames, OscillatorBank, MEL_BANDS_HZ};
use crate::error::Result;
use crate::lm::FIRST_CONTENT;
use crate::rng::{derive_rng, Rng as ChaRng};
use crate::stream::RateConfig;
use crate::tags::Emotion;
use crate::tensor::Tensor;
use crate::tokenizer::{build_codebook, pool_features, tokenize_waveform, Codebook, SpeechTokenSequence};

pub const SYLLABLES_PER_WORD: usize = 2;
pub const QUERY_VOICE: &str = "query";
pub const RESPONSE_VOICE: &str = "response";
/// Amplitude gain per emotion, in `Emotion::ALL` order.
pub const EMOTION_GAIN: [f64; 7] = [1.0, 1.3, 0.6, 1.6, 1.15, 0.8, 0.9];
const ACTIVE_BANDS: usize = 5;

pub fn syllable_amplitudes(seed: u64, voice: &str, word: usize, syllable: usize) -> Vec<f64> {
    let mut rng = derive_rng(seed, &format!("reference.{voice}.{word}.{syllable}"));
    let mut amps = vec![0.0; MEL_BANDS_HZ.len()];
    for _ in 0..ACTIVE_BANDS {
        let band = rng.gen_range(0..amps.len());
        amps[band] += rng.gen_range(0.01..0.06);
    }
    amps
}

/// One syllable per speech-token period, phases continuous across the
/// utterance.
pub fn reference_waveform(rates: &RateConfig, seed: u64, voice: &str, words: &[usize], emotion: Emotion) -> Vec<f64> {
    let bank = OscillatorBank::mel(rates.sample_rate);
    let period = rates.samples_per_token();
    let gain = EMOTION_GAIN[emotion.index()];
    let mut phases = vec![0.0; bank.bands()];
    let mut out = Vec::with_capacity(words.len() * SYLLABLES_PER_WORD * period);
    for &w in words {
        for s in 0..SYLLABLES_PER_WORD {
            let amps: Vec<f64> = syllable_amplitudes(seed, voice, w, s)
                .iter()
                .map(|a| a * gain)
                .collect();
            bank.render(&amps, &mut phases, period, &mut out);
        }
    }
    out
}

/// k-means codebook over the pooled features of every syllable the reference
/// synthesizer can produce, padded with random band vectors when short.
pub fn reference_codebook(rates: &RateConfig, vocab_size: usize, v: usize, seed: u64) -> Result<Codebook> {
    let words: Vec<usize> = (FIRST_CONTENT..vocab_size).collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut collect = |voice: &str, emotion: Emotion| {
        let wave = reference_waveform(rates, seed, voice, &words, emotion);
        let pooled = pool_features(&mel_frames(&wave, rates.sample_rate));
        rows.extend((0..pooled.rows()).map(|i| pooled.row(i).to_vec()));
    };
    for &e in Emotion::ALL {
        collect(QUERY_VOICE, e);
    }
    collect(RESPONSE_VOICE, Emotion::Neutral);
    let mut rng = derive_rng(seed, "reference.codebook.padding");
    while rows.len() < v {
        rows.push((0..MEL_BANDS_HZ.len()).map(|_| rng.gen_range(0.0..0.06)).collect());
    }
    build_codebook(&Tensor::from_rows(&rows, MEL_BANDS_HZ.len())?, v, seed)
}

pub fn random_words(rng: &mut ChaRng, vocab_size: usize, min: usize, max: usize) -> Vec<usize> {
    let n = rng.gen_range(min..=max);
    (0..n).map(|_| rng.gen_range(FIRST_CONTENT..vocab_size)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub transcript: Vec<usize>,
    pub emotion: Emotion,
    pub waveform: Vec<f64>,
}

pub fn query_utterances(model: &SpeechModel, n: usize, seed: u64, label: &str) -> Vec<Utterance> {
    let mut rng = derive_rng(seed, &format!("corpus.{label}"));
    (0..n)
        .map(|_| {
            let transcript = random_words(&mut rng, model.vocab.size(), 4, 8);
            let emotion = *Emotion::ALL.choose(&mut rng).expect("non-empty");
            let waveform = reference_waveform(&model.cfg.rates, seed, QUERY_VOICE, &transcript, emotion);
            Utterance {
                transcript,
                emotion,
                waveform,
            }
        })
        .collect()
}

/// Response speech in the single fixed response voice.
pub fn response_speech(model: &SpeechModel, seed: u64, words: &[usize]) -> Result<SpeechTokenSequence> {
    let wave = reference_waveform(&model.cfg.rates, seed, RESPONSE_VOICE, words, Emotion::Neutral);
    tokenize_waveform(&wave, model.cfg.rates.sample_rate, &model.codebook)
}

/// Stage-1 pairs with continuation targets from the frozen LLM's greedy
/// decoding of the transcript prompt (tagged for the emotion variant).
pub fn alignment_pairs(
    model: &SpeechModel,
    n: usize,
    seed: u64,
    variant: Stage1Variant,
    max_new: usize,
) -> Result<Vec<AlignmentPair>> {
    query_utterances(model, n, seed, "stage1")
        .into_iter()
        .map(|u| {
            let tag = match variant {
                Stage1Variant::Semantic => None,
                Stage1Variant::Emotion => Some(model.vocab.emotion_tag(u.emotion)),
            };
            let continuation =
                model
                    .lm
                    .generate_continuation(&model.store, &model.text_prompt(tag, &u.transcript), max_new)?;
            Ok(AlignmentPair {
                features: model.encode(&u.waveform)?,
                transcript: u.transcript,
                emotion_tag: tag,
                continuation,
            })
        })
        .collect()
}

pub fn tts_pairs(model: &SpeechModel, n: usize, seed: u64) -> Result<Vec<TtsPair>> {
    let mut rng = derive_rng(seed, "corpus.stage2a");
    (0..n)
        .map(|_| {
            let text = random_words(&mut rng, model.vocab.size(), 3, 6);
            Ok(TtsPair {
                speech: response_speech(model, seed, &text)?,
                text,
            })
        })
        .collect()
}

pub fn streaming_samples(model: &SpeechModel, n: usize, seed: u64) -> Result<Vec<StreamingSample>> {
    let mut rng = derive_rng(seed, "corpus.stage2b");
    (0..n)
        .map(|_| {
            let prompt = random_words(&mut rng, model.vocab.size(), 4, 8);
            let response = random_words(&mut rng, model.vocab.size(), 3, 6);
            Ok(StreamingSample {
                speech: response_speech(model, seed, &response)?,
                prompt,
                response,
            })
        })
        .collect()
}

/// `n_speech` spoken queries followed by `n_text` typed ones, each with a
/// random response and its speech.
pub fn stage3_samples(model: &SpeechModel, n_speech: usize, n_text: usize, seed: u64) -> Result<Vec<Stage3Sample>> {
    let mut rng = derive_rng(seed, "corpus.stage3.responses");
    let spoken = query_utterances(model, n_speech, seed, "stage3");
    let mut out = Vec::with_capacity(n_speech + n_text);
    for u in spoken {
        let response = random_words(&mut rng, model.vocab.size(), 3, 6);
        out.push(Stage3Sample {
            input: Stage3Input::Speech(model.encode(&u.waveform)?),
            speech: response_speech(model, seed, &response)?,
            response,
        });
    }
    for _ in 0..n_text {
        let transcript = random_words(&mut rng, model.vocab.size(), 4, 8);
        let response = random_words(&mut rng, model.vocab.size(), 3, 6);
        out.push(Stage3Sample {
            input: Stage3Input::Text(transcript),
            speech: response_speech(model, seed, &response)?,
            response,
        });
    }
    Ok(out)
}
