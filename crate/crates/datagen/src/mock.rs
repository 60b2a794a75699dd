//! Rule-based deterministic clients. Every draw comes from a stream derived
//! from the root seed and the record id.

use std::sync::Arc;

use rand::Rng;
use streamspeech_core::audio::OscillatorBank;
use streamspeech_core::rng::derive_rng;
use streamspeech_core::stream::RateConfig;
use streamspeech_core::tags::Emotion;
use streamspeech_core::training::corpus::EMOTION_GAIN;

use crate::clients::*;
use crate::config::{Marginals, Rulebook};
use crate::types::{Language, ResponseTone, Sensitivity};

/// Samples rendered per word (or per character for Chinese).
pub const MOCK_UNIT_SAMPLES: usize = 160;
const MOCK_BANDS: usize = 4;

pub struct MockInstructionClient {
    pub seed: u64,
    pub marginals: Marginals,
    pub rules: Arc<Rulebook>,
}

impl InstructionClient for MockInstructionClient {
    fn generate(&self, req: &InstructionRequest) -> ClientResult<InstructionReply> {
        let mut rng = derive_rng(self.seed, &format!("mock.instruction.{}", req.record_id));
        let sensitivity = self.marginals.sensitivity.sample(&mut rng);
        let required_value = match sensitivity {
            Sensitivity::Emotion => Some(self.marginals.emotion.sample(&mut rng).label()),
            Sensitivity::Age => Some(self.marginals.age.sample(&mut rng).label()),
            Sensitivity::Gender => Some(self.marginals.gender.sample(&mut rng).label()),
            Sensitivity::None => None,
        };
        let templates = &self.rules.instructions[&req.language][&sensitivity];
        Ok(InstructionReply {
            text: templates[rng.gen_range(0..templates.len())].clone(),
            sensitivity: sensitivity.label().into(),
            required_value: required_value.map(String::from),
        })
    }
}

pub struct MockResponseClient {
    pub rules: Arc<Rulebook>,
}

impl ResponseClient for MockResponseClient {
    fn respond(&self, req: &ResponseRequest) -> ClientResult<ResponseReply> {
        let opener = &self.rules.opener[&req.language][&req.tags.emotion];
        let address = &self.rules.address[&req.language][&req.tags.age];
        let sep = if req.language == Language::Zh { "" } else { " " };
        Ok(ResponseReply {
            text: format!("{opener}{sep}{address}"),
        })
    }
}

pub struct MockEmotionClient {
    pub rules: Arc<Rulebook>,
}

impl EmotionClient for MockEmotionClient {
    fn infer(&self, req: &EmotionRequest) -> ClientResult<EmotionReply> {
        Ok(EmotionReply {
            emotion: self.rules.tone[&req.tags.emotion].clone(),
        })
    }
}

/// Band-oscillator speech: one segment per unit, band amplitudes seeded by
/// (voice, unit), scaled by a style gain.
pub struct MockSynthesizer {
    pub seed: u64,
    pub rates: RateConfig,
}

impl MockSynthesizer {
    fn units(language: Language, text: &str) -> Vec<String> {
        match language {
            Language::En => text.split_whitespace().map(str::to_lowercase).collect(),
            Language::Zh => text.chars().filter(|c| c.is_alphanumeric()).map(String::from).collect(),
        }
    }

    fn style_gain(style: &str) -> f64 {
        if let Ok(e) = style.parse::<Emotion>() {
            EMOTION_GAIN[e.index()]
        } else if let Ok(t) = style.parse::<ResponseTone>() {
            0.8 + 0.1 * t.index() as f64
        } else {
            1.0
        }
    }

    pub fn render(&self, voice: &str, language: Language, text: &str, style: &str) -> AudioReply {
        let bank = OscillatorBank::mel(self.rates.sample_rate);
        let gain = Self::style_gain(style);
        let mut phases = vec![0.0; bank.bands()];
        let mut samples = Vec::new();
        for unit in Self::units(language, text) {
            let mut rng = derive_rng(self.seed, &format!("mock.audio.{voice}.{unit}"));
            let mut amps = vec![0.0; bank.bands()];
            for _ in 0..MOCK_BANDS {
                amps[rng.gen_range(0..bank.bands())] += rng.gen_range(0.01..0.05) * gain;
            }
            bank.render(&amps, &mut phases, MOCK_UNIT_SAMPLES, &mut samples);
        }
        AudioReply {
            sample_rate: self.rates.sample_rate,
            samples,
        }
    }
}

impl VoiceCloneClient for MockSynthesizer {
    fn clone_voice(&self, req: &VoiceCloneRequest) -> ClientResult<AudioReply> {
        Ok(self.render(
            &req.reference_id,
            req.language,
            &req.text,
            req.reference_tags.emotion.label(),
        ))
    }
}

impl InstructedSynthesisClient for MockSynthesizer {
    fn synthesize(&self, req: &InstructedSynthesisRequest) -> ClientResult<AudioReply> {
        Ok(self.render(&req.voice_id, req.language, &req.text, &req.style))
    }
}

impl ClientSuite {
    pub fn mock(seed: u64, marginals: Marginals, rules: Rulebook) -> Self {
        let rules = Arc::new(rules);
        let synth = || MockSynthesizer {
            seed,
            rates: RateConfig::default(),
        };
        Self {
            instruction: Box::new(MockInstructionClient {
                seed,
                marginals,
                rules: rules.clone(),
            }),
            response: Box::new(MockResponseClient { rules: rules.clone() }),
            emotion: Box::new(MockEmotionClient { rules }),
            voice_clone: Box::new(synth()),
            synthesis: Box::new(synth()),
            prompts: Prompts::default(),
        }
    }
}
