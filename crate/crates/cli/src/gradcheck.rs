//! `grad-check`: finite-difference suite over every kernel and composite
//! model.

use anyhow::anyhow;
use streamspeech_core::gradsuite::{run_suite, SuiteEntry};

use crate::config::RunConfig;
use crate::error::CliResult;

pub fn format_suite(entries: &[SuiteEntry], tolerance: f64) -> String {
    let mut out = format!(
        "{:<20} {:>8} {:>14} {:>6}\n",
        "component", "scalars", "max_rel_error", "status"
    );
    for e in entries {
        let status = if e.max_rel_error < tolerance { "ok" } else { "FAIL" };
        out.push_str(&format!(
            "{:<20} {:>8} {:>14.3e} {:>6}\n",
            e.name, e.checked, e.max_rel_error, status
        ));
    }
    out
}

/// Fails when any component reaches the configured tolerance.
pub fn cmd_grad_check(cfg: &RunConfig) -> CliResult<Vec<SuiteEntry>> {
    let tolerance = cfg.gradcheck.tolerance;
    let entries = run_suite(cfg.seed, cfg.gradcheck.eps)?;
    if entries.iter().any(|e| e.max_rel_error >= tolerance) {
        return Err(anyhow!(
            "gradient check at or above {tolerance:e}:\n{}",
            format_suite(&entries, tolerance)
        )
        .into());
    }
    Ok(entries)
}
