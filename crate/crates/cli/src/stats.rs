//! `stats`: tag distributions of an existing manifest.

use std::io::BufReader;

use streamspeech_datagen::manifest::read_manifest;
use streamspeech_datagen::{manifest_stats, ManifestStats};

use crate::config::RunConfig;
use crate::error::{invalid, CliResult};

pub fn cmd_stats(cfg: &RunConfig) -> CliResult<ManifestStats> {
    let path = cfg.manifest_path();
    let file =
        std::fs::File::open(&path).map_err(|e| invalid(format!("cannot open manifest {}: {e}", path.display())))?;
    let records = read_manifest(BufReader::new(file))?;
    Ok(manifest_stats(&records)?)
}
