//! `profile-latency`: first-audio latency and chunk cadence over a grid of
//! schedules and costs, analytic formula against the event simulation.

use anyhow::anyhow;
use serde::{Deserialize, Serialize};
use streamspeech_core::stream::{first_audio_latency, simulate, LatencyParams, ScheduleConfig, Workload};

use crate::config::RunConfig;
use crate::error::CliResult;

/// Largest tolerated analytic/simulated disagreement, in seconds.
pub const LATENCY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub costs: LatencyParams,
    pub m_hidden: usize,
    pub n_tokens: usize,
    pub chunk_tokens: usize,
    pub analytic_s: f64,
    pub simulated_s: f64,
    /// Mean interval between chunk completions; `None` with a single chunk.
    pub cadence_s: Option<f64>,
}

impl LatencyRow {
    pub fn mismatch(&self) -> f64 {
        (self.analytic_s - self.simulated_s).abs()
    }
}

/// Every (costs, M, N, chunk) combination of the configured axes, plus the
/// configured schedule when the axes miss it.
pub fn latency_grid(cfg: &RunConfig) -> Vec<(LatencyParams, ScheduleConfig)> {
    let l = &cfg.latency;
    let mut schedules = Vec::new();
    for &m in &l.m_hidden {
        for &n in &l.n_tokens {
            for &c in &l.chunk_tokens {
                schedules.push(ScheduleConfig {
                    m_hidden: m,
                    n_tokens: n,
                    chunk_tokens: c,
                });
            }
        }
    }
    if !schedules.contains(&cfg.schedule) {
        schedules.push(cfg.schedule);
    }
    l.costs
        .iter()
        .flat_map(|c| schedules.iter().map(move |s| (*c, *s)))
        .collect()
}

pub fn latency_rows(cfg: &RunConfig) -> Vec<LatencyRow> {
    let work = Workload {
        hidden: cfg.latency.hidden.max(cfg.schedule.m_hidden),
        speech: cfg.latency.speech,
    };
    latency_grid(cfg)
        .into_iter()
        .map(|(costs, s)| {
            let trace = simulate(&s, &costs, work);
            LatencyRow {
                costs,
                m_hidden: s.m_hidden,
                n_tokens: s.n_tokens,
                chunk_tokens: s.chunk_tokens,
                analytic_s: first_audio_latency(&s, &costs),
                simulated_s: trace.first_audio().unwrap_or(f64::NAN),
                cadence_s: trace.cadence(),
            }
        })
        .collect()
}

pub fn format_rows(rows: &[LatencyRow]) -> String {
    let mut out = format!(
        "{:>11} {:>10} {:>10} {:>3} {:>3} {:>5} {:>12} {:>12} {:>10}\n",
        "cost_hidden", "cost_token", "cost_chunk", "M", "N", "chunk", "analytic_s", "simulated_s", "cadence_s"
    );
    for r in rows {
        let cadence = r.cadence_s.map_or("-".to_string(), |c| format!("{c:.6}"));
        out.push_str(&format!(
            "{:>11.6} {:>10.6} {:>10.6} {:>3} {:>3} {:>5} {:>12.6} {:>12.6} {:>10}\n",
            r.costs.cost_hidden,
            r.costs.cost_speech_token,
            r.costs.cost_chunk_synth,
            r.m_hidden,
            r.n_tokens,
            r.chunk_tokens,
            r.analytic_s,
            r.simulated_s,
            cadence
        ));
    }
    out
}

/// Table of every grid point; fails when any row disagrees by more than
/// `LATENCY_TOLERANCE`.
pub fn cmd_profile_latency(cfg: &RunConfig) -> CliResult<Vec<LatencyRow>> {
    let rows = latency_rows(cfg);
    let bad: Vec<&LatencyRow> = rows.iter().filter(|r| !(r.mismatch() <= LATENCY_TOLERANCE)).collect();
    if let Some(r) = bad.first() {
        return Err(anyhow!(
            "{} of {} grid points disagree; first: M={} N={} chunk={} analytic {} simulated {}",
            bad.len(),
            rows.len(),
            r.m_hidden,
            r.n_tokens,
            r.chunk_tokens,
            r.analytic_s,
            r.simulated_s
        )
        .into());
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_the_reference_and_zero_rows() {
        let cfg = RunConfig::default();
        let rows = cmd_profile_latency(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 4 * 4 * 4);
        assert!(rows
            .iter()
            .any(|r| r.m_hidden == 4 && r.n_tokens == 8 && r.costs == crate::config::DEFAULT_COSTS));
        let zero: Vec<_> = rows.iter().filter(|r| r.costs.cost_hidden == 0.0).collect();
        assert!(!zero.is_empty());
        assert!(zero.iter().all(|r| r.analytic_s == 0.0 && r.simulated_s == 0.0));
        // 4 * 0.02 + min(8, 4) * 0.005 + 0.01
        let reference = rows
            .iter()
            .find(|r| r.m_hidden == 4 && r.n_tokens == 8 && r.chunk_tokens == 4 && r.costs.cost_hidden > 0.0)
            .unwrap();
        assert!((reference.analytic_s - 0.11).abs() < 1e-12);
    }

    #[test]
    fn configured_schedule_is_always_profiled() {
        let mut cfg = RunConfig::default();
        cfg.latency.m_hidden = vec![1];
        cfg.latency.n_tokens = vec![1];
        cfg.latency.chunk_tokens = vec![1];
        let grid = latency_grid(&cfg);
        assert_eq!(grid.len(), 2 * 2);
        assert!(grid.iter().any(|(_, s)| *s == cfg.schedule));
    }
}
