//! `train`: one stage per invocation. Each stage starts from the checkpoint of
//! the stage before it and writes its own checkpoint and report.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, Context};
use streamspeech_core::training::{
    corpus, run_stage1, run_stage2_offline, run_stage2_streaming, run_stage3, SpeechModel, Stage1Variant, StageOutcome,
    StageReport,
};

use crate::config::RunConfig;
use crate::error::{invalid, CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Semantic,
    Emotion,
    Offline,
    Streaming,
    Joint,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Semantic,
        Stage::Emotion,
        Stage::Offline,
        Stage::Streaming,
        Stage::Joint,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Stage::Semantic => "1s",
            Stage::Emotion => "1e",
            Stage::Offline => "2a",
            Stage::Streaming => "2b",
            Stage::Joint => "3",
        }
    }

    /// Stage whose checkpoint this one starts from.
    pub fn prerequisite(self) -> Option<Stage> {
        let i = Stage::ALL.iter().position(|s| *s == self).expect("listed");
        i.checked_sub(1).map(|j| Stage::ALL[j])
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Stage {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.label() == s)
            .ok_or_else(|| invalid(format!("unknown stage `{s}`; expected one of 1s, 1e, 2a, 2b, 3")))
    }
}

/// `all` expands to every stage in order.
pub fn parse_stages(s: &str) -> CliResult<Vec<Stage>> {
    if s == "all" {
        Ok(Stage::ALL.to_vec())
    } else {
        Ok(vec![s.parse()?])
    }
}

pub fn init_checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.checkpoint_dir().join("init.ckpt")
}

pub fn checkpoint_path(cfg: &RunConfig, stage: Stage) -> PathBuf {
    cfg.checkpoint_dir().join(format!("stage-{}.ckpt", stage.label()))
}

pub fn report_path(cfg: &RunConfig, stage: Stage) -> PathBuf {
    cfg.report_dir().join(format!("stage-{}.json", stage.label()))
}

/// Model a stage starts from: a fresh seeded model for the first stage, the
/// prerequisite checkpoint otherwise.
fn starting_model(cfg: &RunConfig, stage: Stage) -> CliResult<SpeechModel> {
    let Some(prev) = stage.prerequisite() else {
        let model = SpeechModel::init(cfg.model_config(), cfg.seed)?;
        let path = init_checkpoint_path(cfg);
        std::fs::write(&path, model.checkpoint()).with_context(|| format!("cannot write {}", path.display()))?;
        return Ok(model);
    };
    let path = checkpoint_path(cfg, prev);
    if !path.exists() {
        return Err(invalid(format!(
            "stage {stage} requires checkpoint {} from stage {prev}; run `train --stage {prev}` first",
            path.display()
        )));
    }
    let bytes = std::fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
    SpeechModel::from_checkpoint(cfg.model_config(), &bytes)
        .with_context(|| format!("checkpoint {} does not match the configured model", path.display()))
        .map_err(CliError::from)
}

fn run(cfg: &RunConfig, stage: Stage, model: &mut SpeechModel) -> streamspeech_core::Result<StageOutcome> {
    let seed = cfg.seed;
    let t = &cfg.train;
    match stage {
        Stage::Semantic | Stage::Emotion => {
            let (variant, p) = if stage == Stage::Semantic {
                (Stage1Variant::Semantic, &t.stage1s)
            } else {
                (Stage1Variant::Emotion, &t.stage1e)
            };
            let pairs = corpus::alignment_pairs(model, p.pairs, seed, variant, p.max_new)?;
            run_stage1(model, &pairs, variant, &cfg.plan(p.steps, p.lr))
        }
        Stage::Offline => {
            let p = &t.stage2a;
            let pairs = corpus::tts_pairs(model, p.samples, seed)?;
            run_stage2_offline(model, &pairs, &cfg.plan(p.steps, p.lr))
        }
        Stage::Streaming => {
            let p = &t.stage2b;
            let samples = corpus::streaming_samples(model, p.samples, seed)?;
            run_stage2_streaming(model, &samples, &cfg.plan(p.steps, p.lr))
        }
        Stage::Joint => {
            let p = &t.stage3;
            let samples = corpus::stage3_samples(model, p.speech_samples, p.text_samples, seed)?;
            run_stage3(model, &samples, p.speech_weight, &cfg.plan(p.steps, p.lr))
        }
    }
}

/// Runs one stage, writes `stage-<name>.ckpt` and `stage-<name>.json`.
pub fn cmd_train(cfg: &RunConfig, stage: Stage) -> CliResult<StageReport> {
    for dir in [cfg.checkpoint_dir(), cfg.report_dir()] {
        std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let mut model = starting_model(cfg, stage)?;
    log::info!("stage {stage}: training");
    let outcome = run(cfg, stage, &mut model).with_context(|| format!("stage {stage} failed"))?;
    let report = outcome.report;
    let ckpt = checkpoint_path(cfg, stage);
    std::fs::write(&ckpt, model.checkpoint()).with_context(|| format!("cannot write {}", ckpt.display()))?;
    let rpath = report_path(cfg, stage);
    std::fs::write(&rpath, report.to_line() + "\n").with_context(|| format!("cannot write {}", rpath.display()))?;
    log::info!("stage {stage}: {}", report.to_line());
    if report.freeze_violations > 0 {
        return Err(anyhow!("stage {stage}: {} frozen parameters changed", report.freeze_violations).into());
    }
    Ok(report)
}
