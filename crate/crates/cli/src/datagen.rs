//! `datagen`: seed bank through manifest statistics, written under the data
//! directory.

use anyhow::Context;
use streamspeech_datagen::{manifest_stats, run_pipeline, AudioStore, ClientSuite, Dataset, Rulebook};

use crate::config::RunConfig;
use crate::error::{invalid, CliResult};

pub fn load_rules(cfg: &RunConfig) -> CliResult<Rulebook> {
    match &cfg.datagen.rules {
        None => Ok(Rulebook::builtin()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| invalid(format!("cannot read rulebook {}: {e}", p.display())))?;
            Ok(Rulebook::parse(&text)?)
        }
    }
}

/// Runs the pipeline with the mock clients and writes `manifest.jsonl`,
/// `seeds.jsonl`, `stats.json` and the audio tree.
pub fn cmd_datagen(cfg: &RunConfig) -> CliResult<Dataset> {
    let rules = load_rules(cfg)?;
    let dcfg = cfg.datagen_config();
    let clients = ClientSuite::mock(cfg.seed, dcfg.marginals.clone(), rules.clone());
    let dir = cfg.data_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let store = AudioStore::on_disk(&dir);
    let mut data = run_pipeline(&dcfg, &rules, &clients, &store)?;
    let kinds = &cfg.datagen.kinds;
    if data.records.iter().any(|r| !kinds.contains(&r.kind)) {
        data.records.retain(|r| kinds.contains(&r.kind));
        data.stats = if data.records.is_empty() {
            None
        } else {
            Some(manifest_stats(&data.records)?)
        };
    }
    data.write_to(&dir)
        .with_context(|| format!("cannot write dataset to {}", dir.display()))?;
    log::info!(
        "datagen: {} seeds, {} records, {} audio files in {}",
        data.seeds.len(),
        data.records.len(),
        store.paths().len(),
        dir.display()
    );
    Ok(data)
}
