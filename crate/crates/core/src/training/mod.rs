//! Three-stage training on synthetic corpora: adapter alignment, offline then
//! streaming speech-decoder training, and joint fine-tuning.

pub mod corpus;
pub mod stages;

use serde::{Deserialize, Serialize};

use crate::decoder::{DecoderConfig, SpeechDecoder};
use crate::error::{Error, Result};
use crate::frontend::{Adapter, AdapterConfig, AdapterEmbeddings, EncoderStub, FeatureFrames};
use crate::lm::{LmConfig, MicroLm, MixedSequence, TextVocab, BOS, SEP};
use crate::nn::checkpoint::{read_records, restore_into, to_bytes};
use crate::nn::{FreezeSchedule, ParamStore};
use crate::rng::derive_rng;
use crate::stream::{RateConfig, ScheduleConfig};
use crate::tensor::Tensor;
use crate::token2wav::Vocoder;
use crate::tokenizer::{Codebook, CODEBOOK_RECORD};

pub use stages::{
    run_stage1, run_stage2_offline, run_stage2_streaming, run_stage3, AlignmentPair, Stage1Variant, Stage3Input,
    Stage3Sample, StageOutcome, StagePlan, StreamingSample, TtsPair,
};

pub const ENCODER_PROJECTION: &str = "encoder_stub.projection";
pub const BATCH_SIZE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub rates: RateConfig,
    pub schedule: ScheduleConfig,
    pub adapter: AdapterConfig,
    pub lm: LmConfig,
    pub decoder: DecoderConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            rates: RateConfig::default(),
            schedule: ScheduleConfig::default(),
            adapter: AdapterConfig::default(),
            lm: LmConfig::default(),
            decoder: DecoderConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        self.schedule.validate()?;
        let d = self.lm.d_llm;
        let check = |ok: bool, msg: String| if ok { Ok(()) } else { Err(Error::Config(msg)) };
        check(
            self.adapter.d_llm == d,
            format!("adapter.d_llm {} != lm.d_llm {d}", self.adapter.d_llm),
        )?;
        check(
            self.decoder.d_llm == d,
            format!("decoder.d_llm {} != lm.d_llm {d}", self.decoder.d_llm),
        )?;
        check(
            self.decoder.text_vocab == self.lm.vocab,
            format!(
                "decoder.text_vocab {} != lm.vocab {}",
                self.decoder.text_vocab, self.lm.vocab
            ),
        )?;
        check(
            d % self.lm.heads == 0,
            format!("lm.d_llm {d} not divisible by {} heads", self.lm.heads),
        )?;
        check(
            self.decoder.d_dec % self.decoder.heads == 0,
            format!(
                "decoder.d_dec {} not divisible by {} heads",
                self.decoder.d_dec, self.decoder.heads
            ),
        )?;
        check(self.adapter.d_enc >= 1, "adapter.d_enc must be positive".into())?;
        check(self.decoder.codebook >= 2, "codebook needs at least two codes".into())?;
        TextVocab::new(self.lm.vocab).map(|_| ())
    }
}

/// Every component of the toy system with its parameters in one store.
#[derive(Clone, Debug)]
pub struct SpeechModel {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    pub vocab: TextVocab,
    pub encoder: EncoderStub,
    pub adapter: Adapter,
    pub lm: MicroLm,
    pub decoder: SpeechDecoder,
    pub codebook: Codebook,
    pub vocoder: Vocoder,
}

impl SpeechModel {
    fn build(cfg: ModelConfig, seed: u64, codebook: Codebook) -> Result<Self> {
        cfg.validate()?;
        if codebook.size() != cfg.decoder.codebook {
            return Err(Error::Config(format!(
                "codebook has {} codes, decoder expects {}",
                codebook.size(),
                cfg.decoder.codebook
            )));
        }
        let mut store = ParamStore::new();
        let encoder = EncoderStub::new(cfg.rates, cfg.adapter.d_enc, seed)?;
        store.register(ENCODER_PROJECTION, encoder.projection().clone())?;
        store.register(CODEBOOK_RECORD, codebook.vectors().clone())?;
        let adapter = Adapter::new(&mut store, cfg.adapter, &cfg.rates, &mut derive_rng(seed, "adapter"))?;
        let lm = MicroLm::new(&mut store, cfg.lm, &mut derive_rng(seed, "llm"))?;
        let decoder = SpeechDecoder::new(
            &mut store,
            cfg.decoder,
            cfg.schedule,
            &mut derive_rng(seed, "speech_decoder"),
        )?;
        Ok(Self {
            vocab: TextVocab::new(cfg.lm.vocab)?,
            vocoder: Vocoder::new(&cfg.rates)?,
            cfg,
            store,
            encoder,
            adapter,
            lm,
            decoder,
            codebook,
        })
    }

    /// Fresh model; the codebook is fitted to the reference synthesizer.
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let codebook = corpus::reference_codebook(&cfg.rates, cfg.lm.vocab, cfg.decoder.codebook, seed)?;
        Self::build(cfg, seed, codebook)
    }

    /// Model whose every parameter comes from a checkpoint.
    pub fn from_checkpoint(cfg: ModelConfig, bytes: &[u8]) -> Result<Self> {
        cfg.validate()?;
        let loaded = crate::nn::checkpoint::load(bytes)?;
        let book = Codebook::new(loaded.by_name(CODEBOOK_RECORD)?.value.clone())?;
        let mut model = Self::build(cfg, 0, book)?;
        restore_into(&mut model.store, &loaded)?;
        model.codebook = Codebook::new(model.store.by_name(CODEBOOK_RECORD)?.value.clone())?;
        Ok(model)
    }

    pub fn checkpoint(&self) -> Vec<u8> {
        to_bytes(&self.store)
    }

    pub fn encode(&self, waveform: &[f64]) -> Result<FeatureFrames> {
        let projection = &self.store.by_name(ENCODER_PROJECTION)?.value;
        self.encoder
            .encode_with(projection, waveform, self.cfg.rates.sample_rate)
    }

    pub fn adapt(&self, features: &FeatureFrames) -> Result<AdapterEmbeddings> {
        self.adapter.embed(&self.store, features)
    }

    /// `[BOS, tag?, transcript, SEP]`.
    pub fn text_prompt(&self, tag: Option<usize>, transcript: &[usize]) -> MixedSequence {
        let mut seq = MixedSequence::from_tokens(&[BOS]);
        if let Some(tag) = tag {
            seq.push_token(tag);
        }
        seq.push_tokens(transcript).push_token(SEP);
        seq
    }

    /// `[BOS, audio embeddings, SEP]`.
    pub fn speech_prompt(&self, embeddings: &Tensor) -> MixedSequence {
        let mut seq = MixedSequence::from_tokens(&[BOS]);
        seq.push_embeddings(embeddings).push_token(SEP);
        seq
    }
}

/// Names of frozen parameters whose bytes differ between two checkpoints.
pub fn assert_freeze(before: &[u8], after: &[u8], schedule: &FreezeSchedule) -> Result<Vec<String>> {
    let a = read_records(before)?;
    let b = read_records(after)?;
    let names = |r: &[crate::nn::checkpoint::Record]| r.iter().map(|x| x.name.clone()).collect::<Vec<_>>();
    if names(&a) != names(&b) {
        return Err(Error::Checkpoint("checkpoints hold different parameter sets".into()));
    }
    Ok(a.iter()
        .zip(&b)
        .filter(|(x, y)| {
            !schedule.is_trainable(&x.name)
                && (x.value.shape() != y.value.shape() || x.value.to_le_bytes() != y.value.to_le_bytes())
        })
        .map(|(x, _)| x.name.clone())
        .collect())
}

/// Summary of one stage run, emitted as a single JSON line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Teacher-forced next-token accuracy at the end of the stage.
    pub accuracy: f64,
    /// Fraction of samples whose free-running decode matches its targets.
    pub exact_match: f64,
    pub freeze_violations: usize,
}

impl StageReport {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Component;

    fn small_cfg() -> ModelConfig {
        let mut cfg = ModelConfig::default();
        cfg.decoder.codebook = 16;
        cfg
    }

    #[test]
    fn config_consistency() {
        assert!(ModelConfig::default().validate().is_ok());
        let mut bad = ModelConfig::default();
        bad.decoder.d_llm = 32;
        assert!(bad.validate().is_err());
        let mut bad = ModelConfig::default();
        bad.lm.heads = 3;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_byte_identical() {
        let model = SpeechModel::init(small_cfg(), 5).unwrap();
        let bytes = model.checkpoint();
        let again = SpeechModel::from_checkpoint(small_cfg(), &bytes).unwrap();
        assert_eq!(again.checkpoint(), bytes);
        assert_eq!(again.codebook, model.codebook);
    }

    #[test]
    fn freeze_audit() {
        let model = SpeechModel::init(small_cfg(), 6).unwrap();
        let before = model.checkpoint();
        assert!(assert_freeze(&before, &before, &FreezeSchedule::stage1())
            .unwrap()
            .is_empty());

        let mut m = model.clone();
        m.store.by_name_mut("adapter.conv1.weight").unwrap().value.data_mut()[0] += 1.0;
        assert!(assert_freeze(&before, &m.checkpoint(), &FreezeSchedule::stage1())
            .unwrap()
            .is_empty());

        m.store.by_name_mut("llm.head.weight").unwrap().value.data_mut()[3] += 1e-12;
        assert_eq!(
            assert_freeze(&before, &m.checkpoint(), &FreezeSchedule::stage1()).unwrap(),
            vec!["llm.head.weight".to_string()]
        );
        let all = FreezeSchedule::trainable(&[Component::Adapter, Component::Llm]).unwrap();
        assert!(assert_freeze(&before, &m.checkpoint(), &all).unwrap().is_empty());

        let mut other = ParamStore::new();
        other.register("adapter.x", Tensor::scalar(0.0)).unwrap();
        assert!(assert_freeze(&before, &to_bytes(&other), &FreezeSchedule::stage1()).is_err());
    }

    #[test]
    fn report_is_one_line() {
        let r = StageReport {
            stage: "2a".into(),
            steps: 3,
            initial_loss: 5.0,
            final_loss: 1.0,
            accuracy: 0.5,
            exact_match: 0.25,
            freeze_violations: 0,
        };
        let line = r.to_line();
        assert!(!line.contains('\n'));
        assert_eq!(serde_json::from_str::<StageReport>(&line).unwrap(), r);
    }
}
