use rand::seq::SliceRandom;

use super::{assert_freeze, SpeechModel, StageReport, BATCH_SIZE};
use crate::decoder::TrainingSequence;
use crate::error::{Error, Result};
use crate::frontend::FeatureFrames;
use crate::lm::EOS;
use crate::nn::loss::softmax_cross_entropy;
use crate::nn::ops::argmax;
use crate::nn::{apply_schedule, sgd_step, FreezeSchedule, ParamStore};
use crate::rng::derive_rng;
use crate::tensor::Tensor;
use crate::tokenizer::SpeechTokenSequence;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StagePlan {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct StageOutcome {
    pub report: StageReport,
    /// Mean batch loss per step.
    pub losses: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage1Variant {
    Semantic,
    Emotion,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentPair {
    pub features: FeatureFrames,
    pub transcript: Vec<usize>,
    pub emotion_tag: Option<usize>,
    /// Greedy continuation of the transcript prompt, recorded once.
    pub continuation: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TtsPair {
    pub text: Vec<usize>,
    pub speech: SpeechTokenSequence,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamingSample {
    pub prompt: Vec<usize>,
    pub response: Vec<usize>,
    pub speech: SpeechTokenSequence,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stage3Input {
    Speech(FeatureFrames),
    Text(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage3Sample {
    pub input: Stage3Input,
    pub response: Vec<usize>,
    pub speech: SpeechTokenSequence,
}

/// Per-sample loss plus teacher-forced hit counts.
#[derive(Clone, Copy, Debug, Default)]
struct Eval {
    loss: f64,
    hits: usize,
    total: usize,
}

/// Sample indices for every step: epochs of a seeded permutation, batches of
/// `BATCH_SIZE` wrapping across epoch boundaries.
fn batch_schedule(n: usize, steps: usize, seed: u64, label: &str) -> Vec<Vec<usize>> {
    let mut rng = derive_rng(seed, &format!("batches.{label}"));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut pos = 0;
    (0..steps)
        .map(|_| {
            (0..BATCH_SIZE)
                .map(|_| {
                    if pos == n {
                        order.shuffle(&mut rng);
                        pos = 0;
                    }
                    pos += 1;
                    order[pos - 1]
                })
                .collect()
        })
        .collect()
}

/// Mini-batch SGD. `grad` accumulates the gradient of `upstream * loss` for
/// one sample and returns its loss.
fn train_loop<T>(
    model: &mut SpeechModel,
    samples: &[T],
    plan: &StagePlan,
    schedule: &FreezeSchedule,
    label: &str,
    grad: impl Fn(&SpeechModel, &mut ParamStore, &T, f64) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut store = std::mem::take(&mut model.store);
    store.zero_grad();
    apply_schedule(&mut store, schedule);
    let result = (|| {
        let mut losses = Vec::with_capacity(plan.steps);
        for batch in batch_schedule(samples.len(), plan.steps, plan.seed, label) {
            let upstream = 1.0 / batch.len() as f64;
            let mut total = 0.0;
            for i in batch {
                total += grad(model, &mut store, &samples[i], upstream)?;
            }
            let loss = total * upstream;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(loss));
            }
            sgd_step(&mut store, plan.lr, schedule);
            losses.push(loss);
        }
        Ok(losses)
    })();
    store.zero_grad();
    model.store = store;
    result
}

fn mean_eval<T>(
    model: &SpeechModel,
    samples: &[T],
    eval: impl Fn(&SpeechModel, &mut ParamStore, &T) -> Result<Eval>,
) -> Result<Eval> {
    let mut scratch = model.store.clone();
    let mut acc = Eval::default();
    for s in samples {
        let e = eval(model, &mut scratch, s)?;
        acc.loss += e.loss;
        acc.hits += e.hits;
        acc.total += e.total;
    }
    acc.loss /= samples.len() as f64;
    Ok(acc)
}

fn ratio(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

fn require_samples<T>(samples: &[T]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    Ok(())
}

fn text_hits(logits: &Tensor, targets: &[Option<usize>]) -> (usize, usize) {
    let mut hits = 0;
    let mut total = 0;
    for (t, target) in targets.iter().enumerate() {
        if let Some(target) = target {
            total += 1;
            if argmax(logits.row(t)) == *target {
                hits += 1;
            }
        }
    }
    (hits, total)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    model: &SpeechModel,
    stage: &str,
    before: &[u8],
    schedule: &FreezeSchedule,
    plan: &StagePlan,
    initial: Eval,
    last: Eval,
    matched: usize,
    count: usize,
    losses: Vec<f64>,
) -> Result<StageOutcome> {
    let violations = assert_freeze(before, &model.checkpoint(), schedule)?;
    for name in &violations {
        log::warn!("stage {stage}: frozen parameter `{name}` changed");
    }
    Ok(StageOutcome {
        report: StageReport {
            stage: stage.to_string(),
            steps: plan.steps,
            initial_loss: initial.loss,
            final_loss: last.loss,
            accuracy: ratio(last.hits, last.total),
            exact_match: ratio(matched, count),
            freeze_violations: violations.len(),
        },
        losses,
    })
}

// Stage 1: adapter alignment.

fn stage1_step(
    model: &SpeechModel,
    store: &mut ParamStore,
    pair: &AlignmentPair,
    upstream: Option<f64>,
) -> Result<Eval> {
    let (emb, acache) = model.adapter.forward(store, &pair.features)?;
    let mut seq = model.speech_prompt(&emb.data);
    let p = seq.len();
    let c = &pair.continuation;
    if let Some((_, head)) = c.split_last() {
        seq.push_tokens(head);
    }
    let mut targets = vec![None; seq.len()];
    for (i, &tok) in c.iter().enumerate() {
        targets[p - 1 + i] = Some(tok);
    }
    let (out, lcache) = model.lm.forward(store, &seq)?;
    let ce = softmax_cross_entropy(&out.logits, &targets)?;
    let (hits, total) = text_hits(&out.logits, &targets);
    if let Some(upstream) = upstream {
        let dlogits = ce.backward(upstream);
        let dx = model.lm.backward(store, &lcache, Some(&dlogits), None)?;
        model
            .adapter
            .backward(store, &acache, &dx.slice_rows(1, 1 + emb.data.rows()))?;
    }
    Ok(Eval {
        loss: ce.loss,
        hits,
        total,
    })
}

/// Continuation from the speech prompt equals the recorded target.
pub fn stage1_matches(model: &SpeechModel, pair: &AlignmentPair) -> Result<bool> {
    let emb = model.adapt(&pair.features)?;
    let got = model
        .lm
        .generate_continuation(&model.store, &model.speech_prompt(&emb.data), pair.continuation.len())?;
    Ok(got == pair.continuation)
}

/// Trains the adapter so that speech input reproduces the continuation the
/// frozen LLM gives for the transcript. For the emotion variant the target
/// came from a tagged transcript prompt while the speech prompt stays
/// untagged, so emotion must be recovered from the audio.
pub fn run_stage1(
    model: &mut SpeechModel,
    pairs: &[AlignmentPair],
    variant: Stage1Variant,
    plan: &StagePlan,
) -> Result<StageOutcome> {
    require_samples(pairs)?;
    if variant == Stage1Variant::Emotion {
        if let Some(i) = pairs.iter().position(|p| p.emotion_tag.is_none()) {
            return Err(Error::MissingTag(i));
        }
    }
    let stage = match variant {
        Stage1Variant::Semantic => "1s",
        Stage1Variant::Emotion => "1e",
    };
    let schedule = FreezeSchedule::stage1();
    let before = model.checkpoint();
    let eval = |m: &SpeechModel, store: &mut ParamStore, p: &AlignmentPair| stage1_step(m, store, p, None);
    let initial = mean_eval(model, pairs, eval)?;
    let losses = train_loop(model, pairs, plan, &schedule, stage, |m, store, p, up| {
        Ok(stage1_step(m, store, p, Some(up))?.loss)
    })?;
    let last = mean_eval(model, pairs, eval)?;
    let mut matched = 0;
    for p in pairs {
        matched += usize::from(stage1_matches(model, p)?);
    }
    finish(
        model,
        stage,
        &before,
        &schedule,
        plan,
        initial,
        last,
        matched,
        pairs.len(),
        losses,
    )
}

// Stage 2: speech decoder.

fn decoder_step(
    model: &SpeechModel,
    store: &mut ParamStore,
    seq: &TrainingSequence,
    upstream: Option<f64>,
) -> Result<(Eval, Tensor)> {
    let cache = model.decoder.forward(store, seq)?;
    let (hits, total) = model.decoder.accuracy(&cache, seq);
    let dh = match upstream {
        Some(up) => model.decoder.backward(store, &cache, up)?,
        None => Tensor::zeros(&[0, model.cfg.decoder.d_llm]),
    };
    Ok((
        Eval {
            loss: cache.ce.loss,
            hits,
            total,
        },
        dh,
    ))
}

fn target_ids(model: &SpeechModel, speech: &SpeechTokenSequence) -> Result<Vec<usize>> {
    let mut ids = speech
        .ids
        .iter()
        .map(|&c| model.decoder.vocab.speech_id(c))
        .collect::<Result<Vec<_>>>()?;
    ids.push(model.decoder.vocab.eos());
    Ok(ids)
}

fn decoder_budget(model: &SpeechModel, speech: &SpeechTokenSequence) -> usize {
    speech.len() + 1 + model.cfg.schedule.n_tokens
}

fn run_decoder_stage(
    model: &mut SpeechModel,
    stage: &str,
    seqs: &[TrainingSequence],
    schedule: FreezeSchedule,
    plan: &StagePlan,
    matches: impl Fn(&SpeechModel, usize) -> Result<bool>,
) -> Result<StageOutcome> {
    let before = model.checkpoint();
    let eval = |m: &SpeechModel, store: &mut ParamStore, s: &TrainingSequence| Ok(decoder_step(m, store, s, None)?.0);
    let initial = mean_eval(model, seqs, eval)?;
    let losses = train_loop(model, seqs, plan, &schedule, stage, |m, store, s, up| {
        Ok(decoder_step(m, store, s, Some(up))?.0.loss)
    })?;
    let last = mean_eval(model, seqs, eval)?;
    let mut matched = 0;
    for i in 0..seqs.len() {
        matched += usize::from(matches(model, i)?);
    }
    finish(
        model,
        stage,
        &before,
        &schedule,
        plan,
        initial,
        last,
        matched,
        seqs.len(),
        losses,
    )
}

/// Offline TTS: text-embedding prefix, then speech tokens. Only the speech
/// decoder trains.
pub fn run_stage2_offline(model: &mut SpeechModel, pairs: &[TtsPair], plan: &StagePlan) -> Result<StageOutcome> {
    require_samples(pairs)?;
    let seqs = pairs
        .iter()
        .map(|p| model.decoder.build_tts_sequence(&p.text, &p.speech))
        .collect::<Result<Vec<_>>>()?;
    run_decoder_stage(model, "2a", &seqs, FreezeSchedule::stage2_offline(), plan, |m, i| {
        let p = &pairs[i];
        Ok(m.decoder.decode_tts(&m.store, &p.text, decoder_budget(m, &p.speech))? == target_ids(m, &p.speech)?)
    })
}

/// Streaming adaptation on frozen-LLM response states. Trains the projection
/// and the speech decoder.
pub fn run_stage2_streaming(
    model: &mut SpeechModel,
    samples: &[StreamingSample],
    plan: &StagePlan,
) -> Result<StageOutcome> {
    require_samples(samples)?;
    let hidden = samples
        .iter()
        .map(|s| {
            model
                .lm
                .response_hidden_states(&model.store, &model.text_prompt(None, &s.prompt), &s.response)
        })
        .collect::<Result<Vec<_>>>()?;
    let seqs = samples
        .iter()
        .zip(&hidden)
        .map(|(s, h)| model.decoder.build_training_sequence(h, &s.speech))
        .collect::<Result<Vec<_>>>()?;
    run_decoder_stage(model, "2b", &seqs, FreezeSchedule::stage2_streaming(), plan, |m, i| {
        let s = &samples[i];
        let got: Vec<usize> = m
            .decoder
            .decode_streaming(&m.store, &hidden[i], decoder_budget(m, &s.speech))?
            .concat();
        Ok(got == target_ids(m, &s.speech)?)
    })
}

// Stage 3: joint fine-tuning.

fn stage3_step(
    model: &SpeechModel,
    store: &mut ParamStore,
    sample: &Stage3Sample,
    speech_weight: f64,
    upstream: Option<f64>,
) -> Result<Eval> {
    let (mut seq, adapter) = match &sample.input {
        Stage3Input::Speech(features) => {
            let (emb, cache) = model.adapter.forward(store, features)?;
            (model.speech_prompt(&emb.data), Some((cache, emb.data.rows())))
        }
        Stage3Input::Text(transcript) => (model.text_prompt(None, transcript), None),
    };
    let p = seq.len();
    let k = sample.response.len();
    seq.push_tokens(&sample.response);
    let mut targets = vec![None; seq.len()];
    for (i, &tok) in sample.response.iter().chain(std::iter::once(&EOS)).enumerate() {
        targets[p - 1 + i] = Some(tok);
    }
    let (out, lcache) = model.lm.forward(store, &seq)?;
    let text_ce = softmax_cross_entropy(&out.logits, &targets)?;
    let (th, tt) = text_hits(&out.logits, &targets);
    let dseq = model
        .decoder
        .build_training_sequence(&out.hidden.slice_rows(p, p + k), &sample.speech)?;
    let dcache = model.decoder.forward(store, &dseq)?;
    let (sh, st) = model.decoder.accuracy(&dcache, &dseq);
    if let Some(up) = upstream {
        let dh_resp = model.decoder.backward(store, &dcache, up * speech_weight)?;
        let mut dhidden = Tensor::zeros(out.hidden.shape());
        for i in 0..k {
            dhidden.row_mut(p + i).copy_from_slice(dh_resp.row(i));
        }
        let dlogits = text_ce.backward(up);
        let dx = model.lm.backward(store, &lcache, Some(&dlogits), Some(&dhidden))?;
        if let Some((cache, n)) = adapter {
            model.adapter.backward(store, &cache, &dx.slice_rows(1, 1 + n))?;
        }
    }
    Ok(Eval {
        loss: text_ce.loss + speech_weight * dcache.ce.loss,
        hits: th + sh,
        total: tt + st,
    })
}

/// Free-running check: the LLM generates the response text and the decoder,
/// fed the states of that response, reproduces the response speech.
pub fn stage3_matches(model: &SpeechModel, sample: &Stage3Sample) -> Result<bool> {
    let prompt = match &sample.input {
        Stage3Input::Speech(f) => model.speech_prompt(&model.adapt(f)?.data),
        Stage3Input::Text(t) => model.text_prompt(None, t),
    };
    let mut want = sample.response.clone();
    want.push(EOS);
    let text = model.lm.generate_continuation(&model.store, &prompt, want.len())?;
    if text != want {
        return Ok(false);
    }
    let hidden = model
        .lm
        .response_hidden_states(&model.store, &prompt, &sample.response)?;
    let speech = model
        .decoder
        .decode_offline(&model.store, &hidden, decoder_budget(model, &sample.speech))?;
    Ok(speech == target_ids(model, &sample.speech)?)
}

/// Joint text + speech loss over mixed spoken and typed queries. Everything
/// except the encoder stub (and the non-learned tokenizer and vocoder)
/// trains.
pub fn run_stage3(
    model: &mut SpeechModel,
    samples: &[Stage3Sample],
    speech_weight: f64,
    plan: &StagePlan,
) -> Result<StageOutcome> {
    if !samples.iter().any(|s| matches!(s.input, Stage3Input::Speech(_))) {
        return Err(Error::EmptyModality("speech"));
    }
    if !samples.iter().any(|s| matches!(s.input, Stage3Input::Text(_))) {
        return Err(Error::EmptyModality("text"));
    }
    let schedule = FreezeSchedule::stage3();
    let before = model.checkpoint();
    let eval =
        |m: &SpeechModel, store: &mut ParamStore, s: &Stage3Sample| stage3_step(m, store, s, speech_weight, None);
    let initial = mean_eval(model, samples, eval)?;
    let losses = train_loop(model, samples, plan, &schedule, "3", |m, store, s, up| {
        Ok(stage3_step(m, store, s, speech_weight, Some(up))?.loss)
    })?;
    let last = mean_eval(model, samples, eval)?;
    let mut matched = 0;
    for s in samples {
        matched += usize::from(stage3_matches(model, s)?);
    }
    finish(
        model,
        "3",
        &before,
        &schedule,
        plan,
        initial,
        last,
        matched,
        samples.len(),
        losses,
    )
}
