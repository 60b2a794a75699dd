//! One PASS/FAIL line per acceptance criterion. Criteria run sequentially in
//! a single test so that runtime bounds are measured without contention.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use streamspeech_cli::datagen::cmd_datagen;
use streamspeech_cli::train::{checkpoint_path, cmd_train, init_checkpoint_path, Stage};
use streamspeech_cli::RunConfig;
use streamspeech_core::audio::wav_bytes;
use streamspeech_core::decoder::{DecoderConfig, SpeechDecoder};
use streamspeech_core::frontend::{Adapter, AdapterConfig, EncoderStub};
use streamspeech_core::gradsuite::{run_suite, SUITE_EPS};
use streamspeech_core::nn::checkpoint::read_records;
use streamspeech_core::nn::{FreezeSchedule, ParamStore};
use streamspeech_core::rng::derive_rng;
use streamspeech_core::stream::{
    downsampled_length, first_audio_latency, interleave_layout, simulate, LatencyParams, RateConfig, ScheduleConfig,
    Slot, Workload,
};
use streamspeech_core::tags::{Age, Emotion, Gender};
use streamspeech_core::token2wav::Vocoder;
use streamspeech_core::tokenizer::{Codebook, SpeechTokenSequence};
use streamspeech_core::training::assert_freeze;
use streamspeech_core::Tensor;
use streamspeech_datagen::{
    build_seed_bank, generate_instructions, AudioStore, ClientSuite, DatagenConfig, Kind, Language, Requirement,
    Rulebook, Sensitivity,
};

type Check = Result<String, String>;
type Criterion<'a> = Box<dyn FnOnce() -> Check + 'a>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

/// After every M-th consumed hidden state emit up to N tokens; once the
/// hidden states run out, emit the rest.
fn consume_emit(h: usize, s: usize, m: usize, n: usize) -> Vec<Slot> {
    let mut out = Vec::new();
    let mut emitted = 0;
    for consumed in 1..=h {
        out.push(Slot::Hidden);
        if consumed % m == 0 {
            let k = n.min(s - emitted);
            out.extend(std::iter::repeat_n(Slot::Speech, k));
            emitted += k;
        }
    }
    out.extend(std::iter::repeat_n(Slot::Speech, s - emitted));
    out
}

fn interleave_oracle() -> Check {
    let start = Instant::now();
    let mut cases = 0;
    for (m, n) in [(4, 8), (1, 1), (3, 5)] {
        let cfg = ScheduleConfig::new(m, n, 4).map_err(|e| e.to_string())?;
        for h in 0..=64 {
            for s in 0..=64 {
                let got = interleave_layout(h, s, &cfg);
                ensure(got.slots() == consume_emit(h, s, m, n).as_slice(), || {
                    format!("layout differs at h={h} s={s} M={m} N={n}")
                })?;
                cases += 1;
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("{cases} layouts match"))
}

fn tiny_decoder(codebook: usize) -> DecoderConfig {
    DecoderConfig {
        d_llm: 6,
        d_dec: 8,
        layers: 2,
        heads: 2,
        ffn_hidden: 12,
        max_len: 256,
        text_vocab: 10,
        codebook,
    }
}

fn streaming_equivalence() -> Check {
    let start = Instant::now();
    let mut rng = derive_rng(101, "acceptance.decoder");
    let mut tokens = 0;
    for trial in 0..100u64 {
        let schedule = ScheduleConfig::new(rng.gen_range(1..=6), rng.gen_range(1..=10), 4).unwrap();
        let mut store = ParamStore::new();
        let dec = SpeechDecoder::new(
            &mut store,
            tiny_decoder(rng.gen_range(2..=16)),
            schedule,
            &mut derive_rng(trial, "acceptance.decoder.init"),
        )
        .map_err(|e| e.to_string())?;
        let h = rng.gen_range(0..=64);
        let hidden = Tensor::uniform(&[h, 6], 1.0, &mut rng);
        let max_tokens = rng.gen_range(1..=128);
        let offline = dec
            .decode_offline(&store, &hidden, max_tokens)
            .map_err(|e| e.to_string())?;
        let streamed = dec
            .decode_streaming(&store, &hidden, max_tokens)
            .map_err(|e| e.to_string())?
            .concat();
        ensure(offline == streamed, || {
            format!("trial {trial}: {offline:?} vs {streamed:?}")
        })?;
        tokens += offline.len();
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("100 models, {tokens} tokens identical"))
}

fn random_book(seed: u64, size: usize) -> Codebook {
    let mut rng = derive_rng(seed, "acceptance.book");
    let rows: Vec<Vec<f64>> = (0..size)
        .map(|_| (0..20).map(|_| rng.gen_range(0.0..0.06)).collect())
        .collect();
    Codebook::new(Tensor::from_rows(&rows, 20).unwrap()).unwrap()
}

fn chunking_invariance() -> Check {
    let start = Instant::now();
    let rates = RateConfig::default();
    let vocoder = Vocoder::new(&rates).map_err(|e| e.to_string())?;
    let book = random_book(3, 64);
    let mut rng = derive_rng(3, "acceptance.vocoder");
    for trial in 0..100 {
        let len = rng.gen_range(0..=40);
        let tokens = SpeechTokenSequence::new((0..len).map(|_| rng.gen_range(0..64)).collect());
        let bytes = |c: usize| wav_bytes(&vocoder.synth_stream(&tokens, c, &book).unwrap(), rates.sample_rate).unwrap();
        let reference = bytes(1);
        for c in [2, 4, 8] {
            ensure(bytes(c) == reference, || {
                format!("trial {trial}: chunk {c} differs from chunk 1")
            })?;
        }
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok("100 sequences, chunk sizes 1/2/4/8 byte-identical".into())
}

fn rate_arithmetic() -> Check {
    let rates = RateConfig::default();
    ensure(downsampled_length(100) == 25, || {
        format!("downsampled_length(100) = {}", downsampled_length(100))
    })?;
    let stub = EncoderStub::new(rates, 32, 0).map_err(|e| e.to_string())?;
    let wave: Vec<f64> = (0..64_000).map(|i| (i as f64 * 0.05).sin() * 0.1).collect();
    let frames = stub
        .encode_features(&wave, rates.sample_rate)
        .map_err(|e| e.to_string())?;
    ensure(frames.len() == 100, || format!("{} encoder frames", frames.len()))?;
    let mut store = ParamStore::new();
    let adapter = Adapter::new(
        &mut store,
        AdapterConfig::default(),
        &rates,
        &mut derive_rng(0, "acceptance.adapter"),
    )
    .map_err(|e| e.to_string())?;
    let emb = adapter.embed(&store, &frames).map_err(|e| e.to_string())?;
    ensure(emb.data.rows() == 25, || {
        format!("{} adapter embeddings", emb.data.rows())
    })?;

    let vocoder = Vocoder::new(&rates).map_err(|e| e.to_string())?;
    let book = random_book(4, 16);
    let mut state = vocoder.start();
    let chunk = vocoder
        .synth_chunk(&[1, 2, 3, 4, 5, 6, 7, 8], &book, &mut state)
        .map_err(|e| e.to_string())?;
    ensure(chunk.samples.len() == 10_240, || {
        format!("{} samples", chunk.samples.len())
    })?;
    let seconds = chunk.samples.len() as f64 / rates.sample_rate as f64;
    ensure(seconds == 0.64, || format!("{seconds} s"))?;
    ensure(8.0 / rates.speech_token_hz == 0.64, || "token rate".into())?;
    Ok("100 frames -> 25 embeddings, 8 tokens -> 10240 samples = 0.64 s".into())
}

fn gradient_suite() -> Check {
    let start = Instant::now();
    let entries = run_suite(5, SUITE_EPS).map_err(|e| e.to_string())?;
    let worst = entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max);
    for e in &entries {
        ensure(e.max_rel_error < 1e-4, || {
            format!("{} max relative error {:.3e}", e.name, e.max_rel_error)
        })?;
    }
    for name in ["adapter", "micro_lm", "projection_decoder"] {
        ensure(entries.iter().any(|e| e.name == name), || format!("{name} not checked"))?;
    }
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!("{} components, worst {worst:.2e}", entries.len()))
}

/// Parameter names whose bytes differ between two checkpoints.
fn moved(before: &[u8], after: &[u8]) -> Vec<String> {
    let a = read_records(before).unwrap();
    let b = read_records(after).unwrap();
    a.iter()
        .zip(&b)
        .filter(|(x, y)| x.value.to_le_bytes() != y.value.to_le_bytes())
        .map(|(x, _)| x.name.clone())
        .collect()
}

struct Pipeline {
    cfg: RunConfig,
    elapsed: Duration,
    reports: Vec<(Stage, streamspeech_core::training::StageReport)>,
    _dir: tempfile::TempDir,
}

fn full_pipeline() -> Result<Pipeline, String> {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.out = dir.path().to_path_buf();
    let start = Instant::now();
    let mut reports = Vec::new();
    for s in Stage::ALL {
        reports.push((s, cmd_train(&cfg, s).map_err(|e| format!("stage {s}: {e:#}"))?));
    }
    Ok(Pipeline {
        cfg,
        elapsed: start.elapsed(),
        reports,
        _dir: dir,
    })
}

fn freeze_schedules(p: &Pipeline) -> Check {
    let read = |path: PathBuf| std::fs::read(path).unwrap();
    let mut before = read(init_checkpoint_path(&p.cfg));
    for (stage, report) in &p.reports {
        let after = read(checkpoint_path(&p.cfg, *stage));
        let schedule = match stage {
            Stage::Semantic | Stage::Emotion => FreezeSchedule::stage1(),
            Stage::Offline => FreezeSchedule::stage2_offline(),
            Stage::Streaming => FreezeSchedule::stage2_streaming(),
            Stage::Joint => FreezeSchedule::stage3(),
        };
        ensure(report.freeze_violations == 0, || {
            format!("stage {stage}: {} violations", report.freeze_violations)
        })?;
        let violations = assert_freeze(&before, &after, &schedule).map_err(|e| e.to_string())?;
        ensure(violations.is_empty(), || {
            format!("stage {stage}: frozen parameters moved: {violations:?}")
        })?;
        let names = moved(&before, &after);
        let any = |p: &str| names.iter().any(|n| n.starts_with(p));
        let shape_ok = match stage {
            Stage::Semantic | Stage::Emotion => any("adapter.") && names.iter().all(|n| n.starts_with("adapter.")),
            Stage::Offline => any("speech_decoder.") && !any("llm"),
            Stage::Streaming => any("speech_decoder.") && !any("llm") && !any("adapter."),
            Stage::Joint => any("adapter.") && any("llm") && any("speech_decoder.") && !any("encoder_stub"),
        };
        ensure(shape_ok, || format!("stage {stage}: unexpected trained set"))?;
        before = after;
    }
    Ok("zero violations in all 5 stages".into())
}

fn loss_masking() -> Check {
    let mut rng = derive_rng(7, "acceptance.mask");
    let mut slots = 0;
    for trial in 0..20u64 {
        let schedule = ScheduleConfig::new(rng.gen_range(1..=6), rng.gen_range(1..=10), 4).unwrap();
        let mut store = ParamStore::new();
        let dec = SpeechDecoder::new(
            &mut store,
            tiny_decoder(16),
            schedule,
            &mut derive_rng(trial, "acceptance.mask.init"),
        )
        .map_err(|e| e.to_string())?;
        let h = rng.gen_range(1..=24);
        let hidden = Tensor::uniform(&[h, 6], 1.0, &mut rng);
        let speech = SpeechTokenSequence::new((0..rng.gen_range(1..=30)).map(|_| rng.gen_range(0..16)).collect());
        let seq = dec
            .build_training_sequence(&hidden, &speech)
            .map_err(|e| e.to_string())?;
        let base = dec.forward(&store, &seq).map_err(|e| e.to_string())?.ce.loss;
        let mut perturbed = seq.clone();
        for t in 0..seq.len() {
            if !seq.mask[t] {
                perturbed.targets[t] = Some(rng.gen_range(0..dec.vocab.size()));
                slots += 1;
            }
        }
        let other = dec.forward(&store, &perturbed).map_err(|e| e.to_string())?.ce.loss;
        ensure(base.to_bits() == other.to_bits(), || {
            format!("trial {trial}: {base} vs {other}")
        })?;
    }
    Ok(format!("{slots} hidden-slot targets perturbed, loss change 0"))
}

fn overfit(p: &Pipeline) -> Check {
    let get = |s: Stage| &p.reports.iter().find(|(x, _)| *x == s).unwrap().1;
    let a = get(Stage::Offline);
    ensure(p.cfg.train.stage2a.samples == 32 && a.steps <= 2000, || {
        "stage 2a budget".into()
    })?;
    ensure(a.accuracy >= 0.99, || format!("stage 2a accuracy {}", a.accuracy))?;
    for s in [Stage::Semantic, Stage::Emotion] {
        let r = get(s);
        let plan = if s == Stage::Semantic {
            p.cfg.train.stage1s
        } else {
            p.cfg.train.stage1e
        };
        ensure(plan.pairs == 16, || format!("stage {s} pairs"))?;
        ensure(r.exact_match >= 0.95, || {
            format!("stage {s} exact match {}", r.exact_match)
        })?;
    }
    within(p.elapsed, Duration::from_secs(600))?;
    Ok(format!(
        "2a accuracy {:.3}, 1s exact {:.3}, 1e exact {:.3}, pipeline {:.1?}",
        a.accuracy,
        get(Stage::Semantic).exact_match,
        get(Stage::Emotion).exact_match,
        p.elapsed
    ))
}

fn datagen_constraints() -> Check {
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.out = dir.path().to_path_buf();
        cfg.datagen.instructions_per_language = 500;
        let data = cmd_datagen(&cfg).map_err(|e| format!("{e:#}"))?;
        runs.push((snapshot(dir.path()), data, dir));
    }
    ensure(runs[0].0 == runs[1].0, || "reruns differ".into())?;
    let records = &runs[0].1.records;
    let dialogues = records.iter().filter(|r| r.kind != Kind::T2s).count();
    ensure(dialogues >= 1000, || format!("{dialogues} dialogue records"))?;
    let tagged: Vec<_> = records.iter().filter(|r| r.sensitivity != Sensitivity::None).collect();
    ensure(!tagged.is_empty(), || "no sensitivity-tagged records".into())?;
    for r in &tagged {
        let req = Requirement::parse(r.sensitivity, r.required_value.as_deref())?;
        ensure(req.satisfied_by(&r.query_tags()), || {
            format!("{} seed tags do not match", r.id)
        })?;
    }
    let voices: BTreeSet<&str> = records
        .iter()
        .filter(|r| r.kind != Kind::T2s)
        .map(|r| r.response_voice.as_str())
        .collect();
    ensure(voices.len() == 1, || format!("response voices {voices:?}"))?;

    let mut big = DatagenConfig {
        seeds_per_language: 10_000,
        languages: vec![Language::En],
        ..DatagenConfig::default()
    };
    big.instructions_per_language = 0;
    let clients = ClientSuite::mock(big.seed, big.marginals.clone(), Rulebook::builtin());
    let bank =
        build_seed_bank(&big, &Rulebook::builtin(), &clients, &AudioStore::in_memory()).map_err(|e| e.to_string())?;
    let n = bank.len() as f64;
    let mut worst: f64 = 0.0;
    let mut check = |label: String, count: usize, want: f64, total: f64| {
        let diff = (count as f64 / total - want).abs();
        worst = worst.max(diff);
        ensure(diff <= 0.02, || {
            format!("{label}: {:.4} vs {want:.4}", count as f64 / total)
        })
    };
    for &e in Emotion::ALL {
        check(
            format!("emotion {e}"),
            bank.iter().filter(|s| s.tags.emotion == e).count(),
            big.marginals.emotion.probability(e),
            n,
        )?;
    }
    for &g in Gender::ALL {
        check(
            format!("gender {g}"),
            bank.iter().filter(|s| s.tags.gender == g).count(),
            big.marginals.gender.probability(g),
            n,
        )?;
    }
    for &a in Age::ALL {
        check(
            format!("age {a}"),
            bank.iter().filter(|s| s.tags.age == a).count(),
            big.marginals.age.probability(a),
            n,
        )?;
    }
    let instructions = generate_instructions(10_000, Language::En, &clients).map_err(|e| e.to_string())?;
    let m = instructions.len() as f64;
    for &s in Sensitivity::ALL {
        check(
            format!("sensitivity {s}"),
            instructions.iter().filter(|r| r.sensitivity == s).count(),
            big.marginals.sensitivity.probability(s),
            m,
        )?;
    }
    Ok(format!(
        "{} records byte-identical, {} tagged all matching, 1 voice, worst marginal gap {worst:.4}",
        records.len(),
        tagged.len()
    ))
}

fn latency_model() -> Check {
    let mut rng = derive_rng(10, "acceptance.latency");
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let cfg = ScheduleConfig::new(rng.gen_range(1..=8), rng.gen_range(1..=16), rng.gen_range(1..=16)).unwrap();
        let p = LatencyParams {
            cost_hidden: rng.gen_range(0.0..0.1),
            cost_speech_token: rng.gen_range(0.0..0.05),
            cost_chunk_synth: rng.gen_range(0.0..0.2),
        };
        let work = Workload {
            hidden: rng.gen_range(cfg.m_hidden..=64),
            speech: rng.gen_range(cfg.n_tokens.min(cfg.chunk_tokens)..=128),
        };
        let analytic = first_audio_latency(&cfg, &p);
        let simulated = simulate(&cfg, &p, work)
            .first_audio()
            .ok_or_else(|| format!("point {i}: no audio"))?;
        worst = worst.max((analytic - simulated).abs());
        ensure((analytic - simulated).abs() <= 1e-9, || {
            format!("point {i}: {analytic} vs {simulated}")
        })?;
    }
    Ok(format!("1000 points, worst gap {worst:.1e} s"))
}

/// Written to the stderr handle directly so the line shows without `--nocapture`.
fn report(line: String) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

#[test]
fn acceptance_criteria() {
    let trained = guarded(full_pipeline);
    let criteria: Vec<(&str, Criterion)> = vec![
        ("interleave schedule oracle", Box::new(interleave_oracle)),
        ("streaming/offline equivalence", Box::new(streaming_equivalence)),
        ("token2wav chunking invariance", Box::new(chunking_invariance)),
        ("rate arithmetic", Box::new(rate_arithmetic)),
        ("gradient suite", Box::new(gradient_suite)),
        (
            "freeze schedules",
            Box::new(|| trained.as_ref().map_err(Clone::clone).and_then(freeze_schedules)),
        ),
        ("loss masking", Box::new(loss_masking)),
        (
            "overfit checks",
            Box::new(|| trained.as_ref().map_err(Clone::clone).and_then(overfit)),
        ),
        ("datagen determinism and constraints", Box::new(datagen_constraints)),
        ("latency model", Box::new(latency_model)),
    ];
    report(String::new());
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = guarded(check);
        let secs = start.elapsed().as_secs_f64();
        match &result {
            Ok(detail) => report(format!("criterion {:>2} PASS {name} ({secs:.2} s): {detail}", i + 1)),
            Err(why) => {
                report(format!("criterion {:>2} FAIL {name} ({secs:.2} s): {why}", i + 1));
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
