//! Command-line pipeline: data generation, staged training, streaming
//! inference, latency profiling, gradient checking and manifest statistics.

pub mod config;
pub mod datagen;
pub mod error;
pub mod gradcheck;
pub mod infer;
pub mod latency;
pub mod stats;
pub mod train;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
