//! Seed bank → instructions → seed selection → response → synthesis → T2S
//! subset → manifest statistics.

use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use streamspeech_core::rng::derive_rng;

use crate::clients::*;
use crate::config::{DatagenConfig, Rulebook};
use crate::error::{DatagenError, Result};
use crate::manifest::{to_jsonl, validate_manifest};
use crate::stats::{manifest_stats, ManifestStats};
use crate::store::AudioStore;
use crate::types::*;

fn client_err<'a>(stage: &'static str, record: &'a str) -> impl Fn(ClientError) -> DatagenError + 'a {
    move |e| DatagenError::Client {
        stage,
        record: record.to_string(),
        message: e.0,
    }
}

fn store_audio(store: &AudioStore, reply: AudioReply) -> Result<String> {
    store.put(&reply.samples, reply.sample_rate)
}

/// `n_per_language` tagged seed utterances per configured language.
pub fn build_seed_bank(
    cfg: &DatagenConfig,
    rules: &Rulebook,
    clients: &ClientSuite,
    store: &AudioStore,
) -> Result<Vec<SeedAudio>> {
    cfg.validate()?;
    let mut bank = Vec::with_capacity(cfg.languages.len() * cfg.seeds_per_language);
    for &language in &cfg.languages {
        for i in 0..cfg.seeds_per_language {
            let id = format!("seed-{language}-{i:05}");
            let mut rng = derive_rng(cfg.seed, &format!("datagen.seed.{id}"));
            let tags = SpeakerTags {
                emotion: cfg.marginals.emotion.sample(&mut rng),
                gender: cfg.marginals.gender.sample(&mut rng),
                age: cfg.marginals.age.sample(&mut rng),
            };
            let lines = &rules.transcripts[&language];
            let transcript = lines[rng.gen_range(0..lines.len())].clone();
            let reply = clients
                .synthesis
                .synthesize(&InstructedSynthesisRequest {
                    record_id: id.clone(),
                    language,
                    text: transcript.clone(),
                    voice_id: format!("speaker-{id}"),
                    style: tags.emotion.label().into(),
                })
                .map_err(client_err("seed_synthesis", &id))?;
            bank.push(SeedAudio {
                audio: store_audio(store, reply)?,
                id,
                language,
                transcript,
                tags,
            });
        }
    }
    Ok(bank)
}

/// `n` instruction texts with their sensitivity, ids `<language>-<index>`.
pub fn generate_instructions(n: usize, language: Language, clients: &ClientSuite) -> Result<Vec<InstructionRecord>> {
    let prompt = Prompts::render(&clients.prompts.instruction, language);
    (0..n)
        .map(|i| {
            let id = format!("{language}-{i:06}");
            let reply = clients
                .instruction
                .generate(&InstructionRequest {
                    record_id: id.clone(),
                    language,
                    prompt: prompt.clone(),
                })
                .map_err(client_err("instruction", &id))?;
            let bad = |message: String| DatagenError::Client {
                stage: "instruction",
                record: id.clone(),
                message,
            };
            let sensitivity: Sensitivity = reply
                .sensitivity
                .parse()
                .map_err(|e: streamspeech_core::Error| bad(e.to_string()))?;
            Requirement::parse(sensitivity, reply.required_value.as_deref()).map_err(bad)?;
            Ok(InstructionRecord {
                id,
                language,
                text: reply.text,
                sensitivity,
                required_value: reply.required_value,
                seed_id: None,
                instruction_audio: None,
            })
        })
        .collect()
}

/// Uniform choice among seeds of the record's language that satisfy its
/// requirement.
pub fn select_seed<'a>(rec: &InstructionRecord, bank: &'a [SeedAudio], seed: u64) -> Result<&'a SeedAudio> {
    let req = rec.requirement().map_err(|message| DatagenError::Precondition {
        stage: "select_seed",
        record: rec.id.clone(),
        message,
    })?;
    let matching: Vec<&SeedAudio> = bank
        .iter()
        .filter(|s| s.language == rec.language && req.satisfied_by(&s.tags))
        .collect();
    if matching.is_empty() {
        return Err(DatagenError::NoMatchingSeed {
            record: rec.id.clone(),
            language: rec.language.to_string(),
            constraint: req.to_string(),
        });
    }
    let mut rng = derive_rng(seed, &format!("datagen.select.{}", rec.id));
    Ok(matching[rng.gen_range(0..matching.len())])
}

/// Response text and the tone it should be spoken in.
pub fn generate_response(
    rec: &InstructionRecord,
    seed_audio: &SeedAudio,
    clients: &ClientSuite,
) -> Result<(String, ResponseTone)> {
    let precondition = |message: &str| DatagenError::Precondition {
        stage: "response",
        record: rec.id.clone(),
        message: message.into(),
    };
    if rec.text.trim().is_empty() {
        return Err(precondition("instruction text is empty"));
    }
    if rec.seed_id.as_deref() != Some(seed_audio.id.as_str()) {
        return Err(precondition("record has no seed attached"));
    }
    let reply = clients
        .response
        .respond(&ResponseRequest {
            record_id: rec.id.clone(),
            language: rec.language,
            prompt: Prompts::render(&clients.prompts.response, rec.language),
            instruction: rec.text.clone(),
            transcript: seed_audio.transcript.clone(),
            tags: seed_audio.tags,
        })
        .map_err(client_err("response", &rec.id))?;
    if reply.text.trim().is_empty() {
        return Err(DatagenError::Client {
            stage: "response",
            record: rec.id.clone(),
            message: "empty response text".into(),
        });
    }
    let label = clients
        .emotion
        .infer(&EmotionRequest {
            record_id: rec.id.clone(),
            prompt: Prompts::render(&clients.prompts.emotion, rec.language),
            instruction: rec.text.clone(),
            response: reply.text.clone(),
            tags: seed_audio.tags,
        })
        .map_err(client_err("emotion", &rec.id))?
        .emotion;
    let tone = label.parse().map_err(|_| DatagenError::InvalidEmotion {
        record: rec.id.clone(),
        label,
    })?;
    Ok((reply.text, tone))
}

/// Spoken query in the seed's voice, spoken response in the fixed
/// reference voice.
pub fn synthesize_record(
    rec: &InstructionRecord,
    seed_audio: &SeedAudio,
    response: (String, ResponseTone),
    response_voice: &str,
    clients: &ClientSuite,
    store: &AudioStore,
) -> Result<DialogueRecord> {
    let (response_text, tone) = response;
    let query = clients
        .voice_clone
        .clone_voice(&VoiceCloneRequest {
            record_id: rec.id.clone(),
            language: rec.language,
            text: rec.text.clone(),
            reference_id: seed_audio.id.clone(),
            reference_audio: seed_audio.audio.clone(),
            reference_tags: seed_audio.tags,
        })
        .map_err(client_err("voice_clone", &rec.id))?;
    let reply = clients
        .synthesis
        .synthesize(&InstructedSynthesisRequest {
            record_id: rec.id.clone(),
            language: rec.language,
            text: response_text.clone(),
            voice_id: response_voice.into(),
            style: tone.label().into(),
        })
        .map_err(client_err("response_synthesis", &rec.id))?;
    Ok(DialogueRecord {
        id: rec.id.clone(),
        kind: if rec.sensitivity == Sensitivity::None {
            Kind::General
        } else {
            Kind::Empathetic
        },
        language: rec.language,
        text: rec.text.clone(),
        sensitivity: rec.sensitivity,
        required_value: rec.required_value.clone(),
        seed_id: seed_audio.id.clone(),
        query_emotion: seed_audio.tags.emotion,
        query_gender: seed_audio.tags.gender,
        query_age: seed_audio.tags.age,
        instruction_audio: Some(store_audio(store, query)?),
        response_text,
        response_emotion: tone,
        response_voice: response_voice.into(),
        response_audio: store_audio(store, reply)?,
    })
}

/// Seeded subsample of `round(fraction * len)` records, in input order,
/// relabelled T2S with the spoken query removed and `-t2s` appended to ids.
pub fn derive_t2s(records: &[DialogueRecord], fraction: f64, seed: u64) -> Result<Vec<DialogueRecord>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DatagenError::Config(format!("t2s fraction {fraction} outside (0, 1]")));
    }
    let count = (fraction * records.len() as f64).round() as usize;
    let mut picked = sample(&mut derive_rng(seed, "datagen.t2s"), records.len(), count).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|i| DialogueRecord {
            id: format!("{}-t2s", records[i].id),
            kind: Kind::T2s,
            instruction_audio: None,
            ..records[i].clone()
        })
        .collect())
}

fn process_record(
    cfg: &DatagenConfig,
    mut rec: InstructionRecord,
    bank: &[SeedAudio],
    clients: &ClientSuite,
    store: &AudioStore,
) -> Result<DialogueRecord> {
    let seed_audio = select_seed(&rec, bank, cfg.seed)?;
    rec.seed_id = Some(seed_audio.id.clone());
    let response = generate_response(&rec, seed_audio, clients)?;
    synthesize_record(&rec, seed_audio, response, &cfg.response_voice, clients, store)
}

pub struct Dataset {
    pub seeds: Vec<SeedAudio>,
    pub records: Vec<DialogueRecord>,
    /// `None` for an empty manifest.
    pub stats: Option<ManifestStats>,
}

/// Full run. Records are processed in parallel; output order and content do
/// not depend on scheduling.
pub fn run_pipeline(
    cfg: &DatagenConfig,
    rules: &Rulebook,
    clients: &ClientSuite,
    store: &AudioStore,
) -> Result<Dataset> {
    let seeds = build_seed_bank(cfg, rules, clients, store)?;
    let mut instructions = Vec::new();
    for &language in &cfg.languages {
        instructions.extend(generate_instructions(cfg.instructions_per_language, language, clients)?);
    }
    let results: Vec<Result<DialogueRecord>> = instructions
        .into_par_iter()
        .map(|rec| process_record(cfg, rec, &seeds, clients, store))
        .collect();
    let mut records = results.into_iter().collect::<Result<Vec<_>>>()?;
    let general: Vec<DialogueRecord> = records.iter().filter(|r| r.kind == Kind::General).cloned().collect();
    records.extend(derive_t2s(&general, cfg.t2s_fraction, cfg.seed)?);
    validate_manifest(&records)?;
    let stats = if records.is_empty() {
        None
    } else {
        Some(manifest_stats(&records)?)
    };
    Ok(Dataset { seeds, records, stats })
}

impl Dataset {
    /// `manifest.jsonl`, `seeds.jsonl` and, when non-empty, `stats.json`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("manifest.jsonl"), to_jsonl(&self.records))?;
        std::fs::write(dir.join("seeds.jsonl"), to_jsonl(&self.seeds))?;
        if let Some(stats) = &self.stats {
            let text = serde_json::to_string_pretty(stats).expect("stats serialize");
            std::fs::write(dir.join("stats.json"), text + "\n")?;
        }
        Ok(())
    }
}
