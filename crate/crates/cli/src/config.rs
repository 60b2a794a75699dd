//! Run configuration: one TOML file, unknown keys rejected, validated before
//! any subcommand runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use streamspeech_core::decoder::DecoderConfig;
use streamspeech_core::frontend::AdapterConfig;
use streamspeech_core::gradsuite::SUITE_EPS;
use streamspeech_core::lm::LmConfig;
use streamspeech_core::stream::{LatencyParams, RateConfig, ScheduleConfig};
use streamspeech_core::training::{ModelConfig, StagePlan};
use streamspeech_datagen::{DatagenConfig, Kind, Language, Marginals};

use crate::error::{invalid, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelDims {
    pub adapter: AdapterConfig,
    pub lm: LmConfig,
    pub decoder: DecoderConfig,
}

impl Default for ModelDims {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            adapter: m.adapter,
            lm: m.lm,
            decoder: m.decoder,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentPlan {
    pub steps: usize,
    pub lr: f64,
    pub pairs: usize,
    /// Continuation length recorded from the frozen LLM.
    pub max_new: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderPlan {
    pub steps: usize,
    pub lr: f64,
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointPlan {
    pub steps: usize,
    pub lr: f64,
    pub speech_samples: usize,
    pub text_samples: usize,
    pub speech_weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub stage1s: AlignmentPlan,
    pub stage1e: AlignmentPlan,
    pub stage2a: DecoderPlan,
    pub stage2b: DecoderPlan,
    pub stage3: JointPlan,
}

impl Default for TrainSection {
    fn default() -> Self {
        let align = AlignmentPlan {
            steps: 2000,
            lr: 0.3,
            pairs: 16,
            max_new: 4,
        };
        Self {
            stage1s: align,
            stage1e: align,
            stage2a: DecoderPlan {
                steps: 2000,
                lr: 0.3,
                samples: 32,
            },
            stage2b: DecoderPlan {
                steps: 1000,
                lr: 0.3,
                samples: 16,
            },
            stage3: JointPlan {
                steps: 1000,
                lr: 0.1,
                speech_samples: 16,
                text_samples: 16,
                speech_weight: 1.0,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatagenSection {
    pub languages: Vec<Language>,
    pub seeds_per_language: usize,
    pub instructions_per_language: usize,
    pub t2s_fraction: f64,
    pub response_voice: String,
    /// Record kinds written to the manifest.
    pub kinds: Vec<Kind>,
    /// Mock rulebook; the built-in one when absent.
    pub rules: Option<PathBuf>,
    pub marginals: Marginals,
}

impl Default for DatagenSection {
    fn default() -> Self {
        let d = DatagenConfig::default();
        Self {
            languages: d.languages,
            seeds_per_language: d.seeds_per_language,
            instructions_per_language: d.instructions_per_language,
            t2s_fraction: d.t2s_fraction,
            response_voice: d.response_voice,
            kinds: Kind::ALL.to_vec(),
            rules: None,
            marginals: d.marginals,
        }
    }
}

pub const DEFAULT_COSTS: LatencyParams = LatencyParams {
    cost_hidden: 0.02,
    cost_speech_token: 0.005,
    cost_chunk_synth: 0.01,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferSection {
    /// Response text tokens generated by the LLM, EOS included.
    pub max_response: usize,
    pub max_speech_tokens: usize,
    /// Cost model for the timing trace.
    pub costs: LatencyParams,
}

impl Default for InferSection {
    fn default() -> Self {
        Self {
            max_response: 16,
            max_speech_tokens: 256,
            costs: DEFAULT_COSTS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencySection {
    pub m_hidden: Vec<usize>,
    pub n_tokens: Vec<usize>,
    pub chunk_tokens: Vec<usize>,
    pub costs: Vec<LatencyParams>,
    /// Simulated response size.
    pub hidden: usize,
    pub speech: usize,
}

impl Default for LatencySection {
    fn default() -> Self {
        Self {
            m_hidden: vec![1, 2, 4, 8],
            n_tokens: vec![1, 4, 8, 16],
            chunk_tokens: vec![1, 2, 4, 8],
            costs: vec![
                LatencyParams {
                    cost_hidden: 0.0,
                    cost_speech_token: 0.0,
                    cost_chunk_synth: 0.0,
                },
                DEFAULT_COSTS,
            ],
            hidden: 32,
            speech: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckSection {
    pub eps: f64,
    pub tolerance: f64,
}

impl Default for GradCheckSection {
    fn default() -> Self {
        Self {
            eps: SUITE_EPS,
            tolerance: 1e-4,
        }
    }
}

/// Locations of artifacts. Relative paths resolve against `out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub data: PathBuf,
    pub checkpoints: PathBuf,
    pub reports: PathBuf,
    pub infer: PathBuf,
    /// Manifest read by `stats`; `<data>/manifest.jsonl` when absent.
    pub manifest: Option<PathBuf>,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            data: "data".into(),
            checkpoints: "checkpoints".into(),
            reports: "reports".into(),
            infer: "infer".into(),
            manifest: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub rates: RateConfig,
    pub schedule: ScheduleConfig,
    pub model: ModelDims,
    pub train: TrainSection,
    pub datagen: DatagenSection,
    pub infer: InferSection,
    pub latency: LatencySection,
    pub gradcheck: GradCheckSection,
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out: "run".into(),
            rates: RateConfig::default(),
            schedule: ScheduleConfig::default(),
            model: ModelDims::default(),
            train: TrainSection::default(),
            datagen: DatagenSection::default(),
            infer: InferSection::default(),
            latency: LatencySection::default(),
            gradcheck: GradCheckSection::default(),
            paths: PathsSection::default(),
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(invalid(msg()))
    }
}

fn check_lr(name: &str, lr: f64) -> CliResult<()> {
    check(lr.is_finite() && lr >= 0.0, || {
        format!("train.{name}.lr must be finite and non-negative")
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| invalid(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            rates: self.rates,
            schedule: self.schedule,
            adapter: self.model.adapter,
            lm: self.model.lm,
            decoder: self.model.decoder,
        }
    }

    pub fn datagen_config(&self) -> DatagenConfig {
        let d = &self.datagen;
        DatagenConfig {
            seed: self.seed,
            languages: d.languages.clone(),
            seeds_per_language: d.seeds_per_language,
            instructions_per_language: d.instructions_per_language,
            t2s_fraction: d.t2s_fraction,
            response_voice: d.response_voice.clone(),
            marginals: d.marginals.clone(),
        }
    }

    pub fn plan(&self, steps: usize, lr: f64) -> StagePlan {
        StagePlan {
            steps,
            lr,
            seed: self.seed,
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out.join(p)
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.resolve(&self.paths.data)
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.resolve(&self.paths.checkpoints)
    }

    pub fn report_dir(&self) -> PathBuf {
        self.resolve(&self.paths.reports)
    }

    pub fn infer_dir(&self) -> PathBuf {
        self.resolve(&self.paths.infer)
    }

    pub fn manifest_path(&self) -> PathBuf {
        match &self.paths.manifest {
            Some(p) => self.resolve(p),
            None => self.data_dir().join("manifest.jsonl"),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model_config().validate()?;
        let t = &self.train;
        for (name, p) in [("stage1s", &t.stage1s), ("stage1e", &t.stage1e)] {
            check_lr(name, p.lr)?;
            check(p.pairs >= 1, || format!("train.{name}.pairs must be at least 1"))?;
            check(p.max_new >= 1, || format!("train.{name}.max_new must be at least 1"))?;
        }
        for (name, p) in [("stage2a", &t.stage2a), ("stage2b", &t.stage2b)] {
            check_lr(name, p.lr)?;
            check(p.samples >= 1, || format!("train.{name}.samples must be at least 1"))?;
        }
        check_lr("stage3", t.stage3.lr)?;
        check(t.stage3.speech_samples >= 1 && t.stage3.text_samples >= 1, || {
            "train.stage3 needs at least one speech and one text sample".into()
        })?;
        check(
            t.stage3.speech_weight.is_finite() && t.stage3.speech_weight >= 0.0,
            || "train.stage3.speech_weight must be finite and non-negative".into(),
        )?;

        self.datagen_config().validate()?;
        check(!self.datagen.kinds.is_empty(), || "datagen.kinds is empty".into())?;

        self.infer.costs.validate()?;
        check(self.infer.max_speech_tokens >= 1, || {
            "infer.max_speech_tokens must be at least 1".into()
        })?;

        let l = &self.latency;
        for (name, axis) in [
            ("m_hidden", &l.m_hidden),
            ("n_tokens", &l.n_tokens),
            ("chunk_tokens", &l.chunk_tokens),
        ] {
            check(!axis.is_empty() && !axis.contains(&0), || {
                format!("latency.{name} must be a non-empty list of positive values")
            })?;
        }
        check(!l.costs.is_empty(), || "latency.costs is empty".into())?;
        for c in &l.costs {
            c.validate()?;
        }
        let max_m = l.m_hidden.iter().max().copied().unwrap_or(0);
        check(l.hidden >= max_m, || {
            format!("latency.hidden {} is below the largest m_hidden {max_m}", l.hidden)
        })?;
        let max_wait = l
            .n_tokens
            .iter()
            .flat_map(|n| l.chunk_tokens.iter().map(move |c| (*n).min(*c)))
            .max()
            .unwrap_or(0);
        check(l.speech >= max_wait, || {
            format!("latency.speech {} cannot fill a first chunk of {max_wait}", l.speech)
        })?;

        let g = &self.gradcheck;
        check(g.eps > 0.0 && g.eps.is_finite(), || {
            "gradcheck.eps must be positive".into()
        })?;
        check(g.tolerance > 0.0 && g.tolerance.is_finite(), || {
            "gradcheck.tolerance must be positive".into()
        })?;
        Ok(())
    }

    /// Applies command-line overrides, logging each one.
    pub fn apply_overrides(&mut self, seed: Option<u64>, out: Option<PathBuf>) {
        if let Some(seed) = seed {
            if seed != self.seed {
                log::info!("override seed = {seed} (config: {})", self.seed);
            }
            self.seed = seed;
        }
        if let Some(out) = out {
            if out != self.out {
                log::info!("override out = {} (config: {})", out.display(), self.out.display());
            }
            self.out = out;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("sed = 3").is_err());
        assert!(RunConfig::parse("[schedule]\nm = 4").is_err());
        assert!(RunConfig::parse("[train.stage2a]\nsteps = 1\nlr = 0.1\nsamples = 2\nextra = 1").is_err());
        let cfg = RunConfig::parse("seed = 3\n[schedule]\nm_hidden = 2\nn_tokens = 4\nchunk_tokens = 2").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.schedule.m_hidden, 2);
        assert_eq!(cfg.model, ModelDims::default());
    }

    #[test]
    fn inconsistent_values_fail_validation() {
        let mut cfg = RunConfig::default();
        cfg.model.decoder.d_llm = 32;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.latency.m_hidden = vec![4, 0];
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.datagen.t2s_fraction = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.train.stage3.text_samples = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn relative_paths_resolve_under_out() {
        let mut cfg = RunConfig::default();
        cfg.out = "/tmp/x".into();
        assert_eq!(cfg.manifest_path(), PathBuf::from("/tmp/x/data/manifest.jsonl"));
        cfg.paths.manifest = Some("/abs/m.jsonl".into());
        assert_eq!(cfg.manifest_path(), PathBuf::from("/abs/m.jsonl"));
    }
}
