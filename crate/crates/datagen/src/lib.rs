//! Synthetic paralinguistic speech-instruction data: tagged seed voices,
//! cue-sensitive instructions, empathetic responses and their audio, behind
//! pluggable client interfaces with deterministic mocks.

pub mod clients;
pub mod config;
pub mod error;
pub mod manifest;
pub mod mock;
pub mod pipeline;
pub mod stats;
pub mod store;
pub mod types;

pub use clients::ClientSuite;
pub use config::{DatagenConfig, Marginal, Marginals, Rulebook};
pub use error::{DatagenError, Result};
pub use pipeline::{
    build_seed_bank, derive_t2s, generate_instructions, generate_response, run_pipeline, select_seed,
    synthesize_record, Dataset,
};
pub use stats::{manifest_stats, Histogram, ManifestStats};
pub use store::AudioStore;
pub use types::*;
