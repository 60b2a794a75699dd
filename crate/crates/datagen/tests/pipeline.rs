use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use proptest::prelude::*;
use streamspeech_core::tags::{Age, Emotion, Gender};
use streamspeech_datagen::clients::{ClientResult, EmotionClient, EmotionReply, EmotionRequest};
use streamspeech_datagen::manifest::{read_manifest, to_jsonl};
use streamspeech_datagen::*;

fn cfg(seed: u64, seeds: usize, instructions: usize) -> DatagenConfig {
    DatagenConfig {
        seed,
        seeds_per_language: seeds,
        instructions_per_language: instructions,
        ..DatagenConfig::default()
    }
}

fn mock(cfg: &DatagenConfig) -> ClientSuite {
    ClientSuite::mock(cfg.seed, cfg.marginals.clone(), Rulebook::builtin())
}

fn seed_audio(id: &str, language: Language, emotion: Emotion, gender: Gender, age: Age) -> SeedAudio {
    SeedAudio {
        id: id.into(),
        language,
        transcript: "hello there".into(),
        tags: SpeakerTags { emotion, gender, age },
        audio: format!("audio/{id}.wav"),
    }
}

fn instruction(id: &str, sensitivity: Sensitivity, value: Option<&str>) -> InstructionRecord {
    InstructionRecord {
        id: id.into(),
        language: Language::En,
        text: "Recommend a book I would enjoy.".into(),
        sensitivity,
        required_value: value.map(String::from),
        seed_id: None,
        instruction_audio: None,
    }
}

/// Every file under `dir`, relative path → bytes.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn seed_bank_sizes_and_tags() {
    let c = cfg(1, 1, 0);
    let bank = build_seed_bank(&c, &Rulebook::builtin(), &mock(&c), &AudioStore::in_memory()).unwrap();
    assert_eq!(bank.len(), 2);
    assert_eq!(bank[0].language, Language::En);
    assert_eq!(bank[1].language, Language::Zh);
    assert!(bank.iter().all(|s| !s.transcript.is_empty()));

    let c = cfg(1, 1000, 0);
    let store = AudioStore::in_memory();
    let bank = build_seed_bank(&c, &Rulebook::builtin(), &mock(&c), &store).unwrap();
    assert_eq!(bank.len(), 2000);
    assert_eq!(bank.iter().map(|s| &s.id).collect::<BTreeSet<_>>().len(), 2000);

    assert!(build_seed_bank(&cfg(1, 0, 0), &Rulebook::builtin(), &mock(&c), &store).is_err());
}

#[test]
fn seed_tag_marginals_at_ten_thousand() {
    let mut c = cfg(2, 10_000, 0);
    c.languages = vec![Language::En];
    c.marginals.emotion = Marginal(BTreeMap::from([
        (Emotion::Neutral, 4.0),
        (Emotion::Happy, 2.0),
        (Emotion::Sad, 2.0),
        (Emotion::Angry, 1.0),
        (Emotion::Fearful, 1.0),
    ]));
    c.marginals.gender = Marginal(BTreeMap::from([(Gender::Male, 0.3), (Gender::Female, 0.7)]));
    c.marginals.age = Marginal(BTreeMap::from([
        (Age::Child, 0.2),
        (Age::Adult, 0.5),
        (Age::Elderly, 0.3),
    ]));
    let bank = build_seed_bank(&c, &Rulebook::builtin(), &mock(&c), &AudioStore::in_memory()).unwrap();
    let n = bank.len() as f64;
    for &e in Emotion::ALL {
        let f = bank.iter().filter(|s| s.tags.emotion == e).count() as f64 / n;
        assert!((f - c.marginals.emotion.probability(e)).abs() <= 0.02, "{e}: {f}");
    }
    for &g in Gender::ALL {
        let f = bank.iter().filter(|s| s.tags.gender == g).count() as f64 / n;
        assert!((f - c.marginals.gender.probability(g)).abs() <= 0.02, "{g}: {f}");
    }
    for &a in Age::ALL {
        let f = bank.iter().filter(|s| s.tags.age == a).count() as f64 / n;
        assert!((f - c.marginals.age.probability(a)).abs() <= 0.02, "{a}: {f}");
    }
}

#[test]
fn instructions_cover_every_sensitivity_and_are_deterministic() {
    let c = cfg(3, 1, 0);
    let clients = mock(&c);
    assert!(generate_instructions(0, Language::En, &clients).unwrap().is_empty());
    let a = generate_instructions(400, Language::Zh, &clients).unwrap();
    let b = generate_instructions(400, Language::Zh, &mock(&c)).unwrap();
    assert_eq!(a, b);
    let kinds: BTreeSet<Sensitivity> = a.iter().map(|r| r.sensitivity).collect();
    assert_eq!(kinds.len(), 4);
    for r in &a {
        assert!(!r.text.is_empty());
        assert!(r.requirement().is_ok());
    }
    let other = generate_instructions(400, Language::Zh, &mock(&cfg(4, 1, 0))).unwrap();
    assert_ne!(a, other);
}

#[test]
fn age_sensitive_elderly_request_gets_an_elderly_seed() {
    let bank = vec![
        seed_audio("s0", Language::En, Emotion::Sad, Gender::Male, Age::Adult),
        seed_audio("s1", Language::En, Emotion::Happy, Gender::Female, Age::Elderly),
        seed_audio("s2", Language::Zh, Emotion::Happy, Gender::Female, Age::Elderly),
        seed_audio("s3", Language::En, Emotion::Neutral, Gender::Male, Age::Child),
    ];
    for i in 0..50 {
        let rec = instruction(&format!("en-{i}"), Sensitivity::Age, Some("elderly"));
        assert_eq!(select_seed(&rec, &bank, 5).unwrap().id, "s1");
    }
    let only = vec![bank[3].clone()];
    assert_eq!(
        select_seed(&instruction("x", Sensitivity::None, None), &only, 5)
            .unwrap()
            .id,
        "s3"
    );
    let err = select_seed(&instruction("x", Sensitivity::Gender, Some("female")), &only, 5).unwrap_err();
    assert!(matches!(err, DatagenError::NoMatchingSeed { .. }));
    assert!(err.to_string().contains("gender = female"), "{err}");
    let err = select_seed(&instruction("x", Sensitivity::Emotion, Some("elderly")), &bank, 5).unwrap_err();
    assert!(matches!(err, DatagenError::Precondition { .. }));
}

#[test]
fn seed_selection_is_uniform_over_the_matching_subset() {
    let mut bank = Vec::new();
    for i in 0..10 {
        let emotion = if i % 2 == 0 { Emotion::Sad } else { Emotion::Happy };
        bank.push(seed_audio(
            &format!("s{i}"),
            Language::En,
            emotion,
            Gender::Male,
            Age::Adult,
        ));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    let draws = 10_000;
    for i in 0..draws {
        let rec = instruction(&format!("en-{i:06}"), Sensitivity::Emotion, Some("sad"));
        *counts
            .entry(select_seed(&rec, &bank, 6).unwrap().id.clone())
            .or_default() += 1;
    }
    assert_eq!(counts.len(), 5);
    for (id, c) in counts {
        let f = c as f64 / draws as f64;
        assert!((f - 0.2).abs() <= 0.02, "{id}: {f}");
    }
}

#[test]
fn sad_query_gets_a_comforting_response() {
    let c = cfg(7, 1, 0);
    let clients = mock(&c);
    let seed = seed_audio("s0", Language::En, Emotion::Sad, Gender::Female, Age::Adult);
    let mut rec = instruction("en-000001", Sensitivity::Emotion, Some("sad"));
    rec.seed_id = Some("s0".into());
    let (text, tone) = generate_response(&rec, &seed, &clients).unwrap();
    assert_eq!(tone, ResponseTone::ComfortingCalm);
    assert_eq!(tone.label(), "comforting-calm");
    assert!(!text.is_empty());
    assert_eq!(generate_response(&rec, &seed, &clients).unwrap(), (text, tone));

    let mut empty = rec.clone();
    empty.text = "  ".into();
    assert!(matches!(
        generate_response(&empty, &seed, &clients),
        Err(DatagenError::Precondition { .. })
    ));
    let mut detached = rec.clone();
    detached.seed_id = None;
    assert!(generate_response(&detached, &seed, &clients).is_err());
}

struct BadEmotion;

impl EmotionClient for BadEmotion {
    fn infer(&self, _: &EmotionRequest) -> ClientResult<EmotionReply> {
        Ok(EmotionReply {
            emotion: "melancholic".into(),
        })
    }
}

#[test]
fn unknown_emotion_label_is_rejected() {
    let c = cfg(8, 1, 0);
    let mut clients = mock(&c);
    clients.emotion = Box::new(BadEmotion);
    let seed = seed_audio("s0", Language::En, Emotion::Sad, Gender::Female, Age::Adult);
    let mut rec = instruction("en-000002", Sensitivity::None, None);
    rec.seed_id = Some("s0".into());
    let err = generate_response(&rec, &seed, &clients).unwrap_err();
    assert!(matches!(&err, DatagenError::InvalidEmotion { label, .. } if label == "melancholic"));
    assert_eq!(err.location(), Some(("emotion", "en-000002")));
}

#[test]
fn synthesis_is_byte_deterministic_on_disk() {
    let c = cfg(9, 1, 0);
    let clients = mock(&c);
    let seed = seed_audio("s0", Language::En, Emotion::Angry, Gender::Male, Age::Elderly);
    let mut rec = instruction("en-000003", Sensitivity::Age, Some("elderly"));
    rec.seed_id = Some("s0".into());
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut snaps = Vec::new();
    for dir in &dirs {
        let store = AudioStore::on_disk(dir.path());
        let response = generate_response(&rec, &seed, &clients).unwrap();
        let out = synthesize_record(&rec, &seed, response, "voice-a", &clients, &store).unwrap();
        assert_eq!(out.kind, Kind::Empathetic);
        assert!(out.instruction_audio.is_some());
        assert_eq!(store.paths().len(), 2);
        for p in store.paths() {
            let bytes = std::fs::read(dir.path().join(&p)).unwrap();
            assert_eq!(&bytes[..4], b"RIFF");
            assert!(p.contains(&store::sha256_hex(&bytes)));
        }
        snaps.push(snapshot(dir.path()));
    }
    assert_eq!(snaps[0], snaps[1]);
}

fn general_records(n: usize) -> Vec<DialogueRecord> {
    let c = cfg(10, 20, n);
    let mut c = c;
    c.languages = vec![Language::En];
    c.marginals.sensitivity = Marginal(BTreeMap::from([(Sensitivity::None, 1.0)]));
    c.t2s_fraction = 1.0;
    let data = run_pipeline(&c, &Rulebook::builtin(), &mock(&c), &AudioStore::in_memory()).unwrap();
    data.records.into_iter().filter(|r| r.kind == Kind::General).collect()
}

#[test]
fn t2s_subsets() {
    let records = general_records(1000);
    assert_eq!(records.len(), 1000);
    let all = derive_t2s(&records, 1.0, 3).unwrap();
    assert_eq!(all.len(), 1000);
    let half = derive_t2s(&records, 0.5, 3).unwrap();
    assert_eq!(half.len(), 500);
    assert_eq!(half, derive_t2s(&records, 0.5, 3).unwrap());
    assert_ne!(half, derive_t2s(&records, 0.5, 4).unwrap());
    let by_id: HashMap<&str, &DialogueRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    for t in &half {
        assert_eq!(t.kind, Kind::T2s);
        assert!(t.instruction_audio.is_none());
        let src = by_id[t.id.strip_suffix("-t2s").unwrap()];
        assert_eq!(t.response_audio, src.response_audio);
        assert_eq!(t.response_text, src.response_text);
        t.validate(0).unwrap();
    }
    assert!(derive_t2s(&records, 0.0, 3).is_err());
    assert!(derive_t2s(&records, 1.5, 3).is_err());
}

#[test]
fn stats_match_a_recount() {
    assert!(matches!(manifest_stats(&[]), Err(DatagenError::EmptyManifest)));
    let records = general_records(1);
    let single = manifest_stats(&records[..1]).unwrap();
    for h in [
        &single.query_emotion,
        &single.query_age,
        &single.query_gender,
        &single.response_emotion,
    ] {
        assert_eq!(h.bins.iter().filter(|b| b.count > 0).count(), 1);
        assert_eq!(h.bins.iter().map(|b| b.fraction).sum::<f64>(), 1.0);
    }

    let c = cfg(11, 50, 300);
    let data = run_pipeline(&c, &Rulebook::builtin(), &mock(&c), &AudioStore::in_memory()).unwrap();
    let stats = data.stats.unwrap();
    let spoken: Vec<&DialogueRecord> = data.records.iter().filter(|r| r.kind != Kind::T2s).collect();
    for &e in Emotion::ALL {
        let n = spoken.iter().filter(|r| r.query_emotion == e).count();
        assert_eq!(stats.query_emotion.count(e.label()), n);
    }
    for &a in Age::ALL {
        assert_eq!(
            stats.query_age.count(a.label()),
            spoken.iter().filter(|r| r.query_age == a).count()
        );
    }
    for &g in Gender::ALL {
        assert_eq!(
            stats.query_gender.count(g.label()),
            spoken.iter().filter(|r| r.query_gender == g).count()
        );
    }
    for &t in ResponseTone::ALL {
        let n = data.records.iter().filter(|r| r.response_emotion == t).count();
        assert_eq!(stats.response_emotion.count(t.label()), n);
    }
    for h in [
        &stats.query_emotion,
        &stats.query_age,
        &stats.query_gender,
        &stats.response_emotion,
    ] {
        assert!((h.bins.iter().map(|b| b.fraction).sum::<f64>() - 1.0).abs() <= 1e-12);
    }
    assert_eq!(stats.records, data.records.len());
    assert_eq!(stats.to_table().lines().count(), 1 + 7 + 3 + 2 + 6);
}

#[test]
fn full_mock_run_is_byte_identical_and_sound() {
    let c = cfg(12, 100, 500);
    let mut snaps = Vec::new();
    let mut manifests = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let data = run_pipeline(&c, &Rulebook::builtin(), &mock(&c), &AudioStore::on_disk(dir.path())).unwrap();
        data.write_to(dir.path()).unwrap();
        snaps.push(snapshot(dir.path()));
        manifests.push(data.records);
    }
    assert_eq!(snaps[0], snaps[1]);
    let records = &manifests[0];
    assert!(records.len() >= 1000);
    for r in records {
        let req = Requirement::parse(r.sensitivity, r.required_value.as_deref()).unwrap();
        assert!(req.satisfied_by(&r.query_tags()), "{}", r.id);
    }
    let voices: BTreeSet<&str> = records
        .iter()
        .filter(|r| r.kind != Kind::T2s)
        .map(|r| r.response_voice.as_str())
        .collect();
    assert_eq!(voices.len(), 1);
    let manifest = &snaps[0]["manifest.jsonl"];
    assert_eq!(&read_manifest(manifest.as_slice()).unwrap(), records);
    for r in records {
        assert!(snaps[0].contains_key(&r.response_audio));
        if let Some(a) = &r.instruction_audio {
            assert!(snaps[0].contains_key(a));
        }
    }
}

#[test]
fn empty_run_has_no_stats() {
    let c = cfg(13, 5, 0);
    let data = run_pipeline(&c, &Rulebook::builtin(), &mock(&c), &AudioStore::in_memory()).unwrap();
    assert!(data.records.is_empty());
    assert!(data.stats.is_none());
    assert!(manifest_stats(&data.records).is_err());
}

#[test]
fn manifest_rejects_broken_lines() {
    let records = general_records(3);
    let text = to_jsonl(&records);
    assert_eq!(read_manifest(text.as_bytes()).unwrap(), records);
    let extra = text.replacen("\"kind\"", "\"colour\":1,\"kind\"", 1);
    assert!(read_manifest(extra.as_bytes()).is_err());
    let bad_tag = text.replacen("\"query_age\":\"", "\"query_age\":\"x", 1);
    assert!(matches!(
        read_manifest(bad_tag.as_bytes()),
        Err(DatagenError::Manifest { line: 1, .. })
    ));
    let mut violated = records.clone();
    violated[1].sensitivity = Sensitivity::Age;
    violated[1].required_value = Some(
        if violated[1].query_age == Age::Child {
            "adult"
        } else {
            "child"
        }
        .into(),
    );
    assert!(matches!(
        read_manifest(to_jsonl(&violated).as_bytes()),
        Err(DatagenError::Manifest { line: 2, .. })
    ));
    let dup = format!("{text}{}", to_jsonl(&records[..1]));
    assert!(read_manifest(dup.as_bytes()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn schema_round_trip(seed in 0u64..10_000, n in 1usize..40) {
        let c = cfg(seed, 200, n);
        let data = run_pipeline(&c, &Rulebook::builtin(), &mock(&c), &AudioStore::in_memory()).unwrap();
        let text = to_jsonl(&data.records);
        prop_assert_eq!(read_manifest(text.as_bytes()).unwrap(), data.records.clone());
        prop_assert_eq!(to_jsonl(&read_manifest(text.as_bytes()).unwrap()), text);
        let seeds: Vec<SeedAudio> = manifest::read_jsonl(to_jsonl(&data.seeds).as_bytes()).unwrap();
        prop_assert_eq!(seeds, data.seeds);
    }
}
